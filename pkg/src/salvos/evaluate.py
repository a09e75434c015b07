"""
Pixel-error evaluation: per-frame XOR counts against ground truth, averaged
over the sequence, plus plain-text / CSV reporting.
"""

import io
from dataclasses import dataclass, field


import numpy as np


@dataclass
class SequenceReport:
    name: str
    per_frame_xor: list
    mean_error: float
    frame_count: int
    stage_runtimes: dict = field(default_factory=dict)


def xor_error(result, truth, name="sequence"):
    """Mean per-frame count of disagreeing pixels between two mask sequences."""
    result = [np.asarray(frame) for frame in result]
    truth = [np.asarray(frame) for frame in truth]
    if len(result) != len(truth):
        raise ValueError("frame count mismatch: %d result vs %d truth"
                         % (len(result), len(truth)))
    per_frame = []
    for t in range(len(result)):
        if result[t].shape != truth[t].shape:
            raise ValueError("frame %d dimension mismatch: %s vs %s"
                             % (t, result[t].shape, truth[t].shape))
        per_frame.append(int(np.logical_xor(result[t] > 0, truth[t] > 0).sum()))
    mean = sum(per_frame) / len(per_frame)
    return SequenceReport(name=name, per_frame_xor=per_frame, mean_error=mean,
                          frame_count=len(per_frame))


def report_table(reports):
    """Render reports as (plain-text table, CSV string)."""
    if not reports:
        raise ValueError("need at least one report")
    width = max(len(r.name) for r in reports)
    lines = ["%-*s  %12s  %8s" % (width, "sequence", "mean error", "frames")]
    lines.append("-" * len(lines[0]))
    csv_lines = ["sequence,mean_error,frames"]
    for r in reports:
        lines.append("%-*s  %12.2f  %8d" % (width, r.name, r.mean_error, r.frame_count))
        csv_lines.append("%s,%.6f,%d" % (r.name, r.mean_error, r.frame_count))
    return "\n".join(lines), "\n".join(csv_lines) + "\n"
