#!/usr/bin/env python3
"""Brute-force sSC for every subject and network of a study manifest.

Reads the CSV files directly and evaluates the double sum over voxel pairs
of each network, so it shares no code with the C++ estimator. Used to
check data/toy/expected/estimates.json.

usage: toy_oracle.py MANIFEST ESTIMATES_JSON
"""
import csv
import json
import os
import sys


def main(manifest_path, estimates_path):
    base = os.path.dirname(manifest_path)
    manifest = json.load(open(manifest_path))
    with open(os.path.join(base, manifest["grid"])) as f:
        ids = [int(r["voxel_id"]) for r in csv.DictReader(f)]
    index = {v: i for i, v in enumerate(ids)}
    V = len(ids)
    networks = {}
    with open(os.path.join(base, manifest["masks"])) as f:
        for r in csv.DictReader(f):
            networks.setdefault(r["component"], []).append(index[int(r["voxel_id"])])

    expected = json.load(open(estimates_path))
    worst = 0.0
    for s, subject in enumerate(manifest["subjects"]):
        path = os.path.join(base, subject["counts"])
        n_streams = json.load(open(path + ".json"))["streams_per_seed"]
        count = [[0.0] * V for _ in range(V)]
        with open(path) as f:
            for r in csv.DictReader(f):
                j, k, c = index[int(r["seed"])], index[int(r["target"])], float(r["count"])
                count[j][k] = count[k][j] = c
        row_mean = [sum(count[j]) / (V - 1) for j in range(V)]
        for comp in expected["components"]:
            members = networks[comp["component"]]
            num = den = 0.0
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    j, k = members[a], members[b]
                    base_jk = 0.5 * (row_mean[j] + row_mean[k])
                    num += count[j][k] - base_jk
                    den += n_streams - base_jk
            theta = num / den
            got = comp["subjects"][s]["theta_hat"]
            worst = max(worst, abs(theta - got) / max(abs(theta), 1e-300))
    print(f"largest relative difference {worst:.3g}")
    return 0 if worst <= 1e-12 else 1


if __name__ == "__main__":
    sys.exit(main(sys.argv[1], sys.argv[2]))
