#!/usr/bin/env python3
"""Writes the golden wire vectors from the byte layouts alone."""

import json
import struct
from pathlib import Path

HERE = Path(__file__).parent


def ofh(ts, wf, beam, flag):
    return struct.pack(">BBHQ", 0x80 if flag else 0, beam, wf, ts)


def ofh_vectors():
    cases = [
        (0, 0, 0, False),
        (0, 0, 0, True),
        (1, 1, 1, True),
        (0x0123456789ABCDEF, 0xBEEF, 0x7F, True),
        (2**64 - 1, 0xFFFF, 0xFF, True),
        (1_700_000_000_123_456_789, 1, 4, False),
        (42, 2, 200, True),
    ]
    lines = ["# hex tx_timestamp waveform_id beam_index sensing_flag"]
    for ts, wf, beam, flag in cases:
        lines.append(f"{ofh(ts, wf, beam, flag).hex()} {ts} {wf} {beam} {int(flag)}")
    (HERE / "ofh_metadata_vectors.txt").write_text("\n".join(lines) + "\n")


def frame(msg_type, corr, body):
    return struct.pack(">BBII", 1, msg_type, corr, len(body)) + body


def trigger(energy, aoa):
    flags = (1 if energy is not None else 0) | (2 if aoa is not None else 0)
    return struct.pack(">Bdd", flags, energy or 0.0, aoa or 0.0)


def trig_json(energy, aoa):
    return {"echo_energy_threshold_db": energy, "aoa_shift_threshold_deg": aoa}


REPORT = {
    "t0": 123456789,
    "delay_s": 1e-6,
    "range_m": 149.896229,
    "doppler_hz": -250.5,
    "radial_velocity_mps": -10.75,
    "aoa_azimuth_deg": 10.0,
    "aoa_elevation_deg": 0.0,
    "echo_energy_db": -13.5,
    "si_power_db": -300.0,
    "multipath_spread_s": 2.5e-8,
    "angular_entropy": 1.0986122886681098,
    "confidence": 0.5,
    "beam_index": 3,
    "waveform_id": 1,
    "sequence_number": 77,
}


def report_bytes(r):
    return struct.pack(
        ">Q11dBHQ",
        r["t0"],
        r["delay_s"],
        r["range_m"],
        r["doppler_hz"],
        r["radial_velocity_mps"],
        r["aoa_azimuth_deg"],
        r["aoa_elevation_deg"],
        r["echo_energy_db"],
        r["si_power_db"],
        r["multipath_spread_s"],
        r["angular_entropy"],
        r["confidence"],
        r["beam_index"],
        r["waveform_id"],
        r["sequence_number"],
    )


def e2sm_vectors():
    out = []

    def add(name, raw, msg):
        out.append({"name": name, "hex": raw.hex(), "message": msg})

    body = struct.pack(">BIBd", 0, 0, 0, 10.0) + trigger(None, None)
    add("sub_request_periodic", frame(1, 5, body), {
        "correlation_id": 5,
        "payload": {"type": "SUBSCRIPTION_REQUEST", "body": {
            "action": "SUBSCRIBE", "subscription_id": 0, "mode": "PERIODIC",
            "period_ms": 10.0, "trigger": trig_json(None, None)}}})

    body = struct.pack(">BIBd", 0, 0, 1, 0.0) + trigger(-40.0, 15.0)
    add("sub_request_event", frame(1, 6, body), {
        "correlation_id": 6,
        "payload": {"type": "SUBSCRIPTION_REQUEST", "body": {
            "action": "SUBSCRIBE", "subscription_id": 0, "mode": "EVENT",
            "period_ms": 0.0, "trigger": trig_json(-40.0, 15.0)}}})

    body = struct.pack(">BIBd", 1, 0x80000000, 1, 0.0) + trigger(None, None)
    add("sub_request_delete", frame(1, 7, body), {
        "correlation_id": 7,
        "payload": {"type": "SUBSCRIPTION_REQUEST", "body": {
            "action": "DELETE", "subscription_id": 0x80000000, "mode": "EVENT",
            "period_ms": 0.0, "trigger": trig_json(None, None)}}})

    add("sub_response_accepted", frame(2, 5, struct.pack(">IB", 1, 0)), {
        "correlation_id": 5,
        "payload": {"type": "SUBSCRIPTION_RESPONSE",
                    "body": {"subscription_id": 1, "status": "ACCEPTED"}}})

    add("sub_response_rejected", frame(2, 9, struct.pack(">IB", 0, 1)), {
        "correlation_id": 9,
        "payload": {"type": "SUBSCRIPTION_RESPONSE",
                    "body": {"subscription_id": 0, "status": "REJECTED"}}})

    add("sub_response_empty", frame(2, 9, b""), {
        "correlation_id": 9,
        "payload": {"type": "SUBSCRIPTION_RESPONSE", "body": None}})

    add("indication", frame(3, 1, report_bytes(REPORT)), {
        "correlation_id": 1,
        "payload": {"type": "INDICATION", "body": REPORT}})

    controls = [
        ("control_set_period", 1, struct.pack(">d", 20.0), {"kind": "SET_PERIOD", "value": 20.0}),
        ("control_set_beam", 2, struct.pack(">B", 6), {"kind": "SET_BEAM", "value": 6}),
        ("control_set_sic", 3, struct.pack(">B", 0), {"kind": "SET_SIC", "value": False}),
        ("control_set_trigger", 4, trigger(-35.25, None),
         {"kind": "SET_TRIGGER", "value": trig_json(-35.25, None)}),
    ]
    for i, (name, kind, value, action) in enumerate(controls):
        issued = 1_000_000 + i
        body = struct.pack(">BQ", kind, issued) + value
        add(name, frame(4, 100 + i, body), {
            "correlation_id": 100 + i,
            "payload": {"type": "CONTROL_REQUEST",
                        "body": {"action": action, "issued_at": issued}}})

    add("control_ack", frame(5, 100, struct.pack(">BQB", 1, 2_000_000, 0)), {
        "correlation_id": 100,
        "payload": {"type": "CONTROL_ACK", "body": {
            "kind": "SET_PERIOD", "received_at": 2_000_000, "status": "APPLIED"}}})

    add("control_ack_rejected", frame(5, 101, struct.pack(">BQB", 2, 5, 1)), {
        "correlation_id": 101,
        "payload": {"type": "CONTROL_ACK", "body": {
            "kind": "SET_BEAM", "received_at": 5, "status": "REJECTED"}}})

    errors = [
        ("empty", b"", "Truncated"),
        ("short_header", bytes([1, 2, 0, 0]), "Truncated"),
        ("bad_version", struct.pack(">BBII", 2, 2, 0, 0), "UnknownVersion"),
        ("bad_type", struct.pack(">BBII", 1, 9, 0, 0), "UnknownType"),
        ("type_zero", struct.pack(">BBII", 1, 0, 0, 0), "UnknownType"),
        ("payload_truncated", struct.pack(">BBII", 1, 2, 0, 5) + b"\x00\x00", "Truncated"),
        ("trailing_bytes", frame(2, 1, b"") + b"\x00", "LengthMismatch"),
        ("response_len_3", frame(2, 1, b"\x00\x00\x00"), "LengthMismatch"),
        ("indication_short", frame(3, 1, report_bytes(REPORT)[:-1]), "LengthMismatch"),
        ("bad_control_kind", frame(4, 1, struct.pack(">BQd", 9, 0, 1.0)), "UnknownType"),
        ("bad_sic_bool", frame(4, 1, struct.pack(">BQB", 3, 0, 2)), "UnknownType"),
    ]
    err_lines = [{"name": n, "hex": raw.hex(), "error": kind} for n, raw, kind in errors]

    with open(HERE / "e2sm_vectors.jsonl", "w") as f:
        for v in out:
            f.write(json.dumps(v) + "\n")
    with open(HERE / "e2sm_error_vectors.jsonl", "w") as f:
        for v in err_lines:
            f.write(json.dumps(v) + "\n")


if __name__ == "__main__":
    ofh_vectors()
    e2sm_vectors()
