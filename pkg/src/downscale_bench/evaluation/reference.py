"""Published benchmark values bundled as static context.

These numbers come from full-archive experiments on reanalysis and wind-toolkit
data and are not reproduced by this package; they exist so that desk-scale
reports can be read next to the published scale of the effects.
"""
from __future__ import annotations

from dataclasses import dataclass

COLUMNS = ("MSE", "MAE", "IN", "PSNR")


@dataclass(frozen=True)
class ReferenceRow:
    model: str
    is_no: bool
    standard: tuple[float, float, float, float]
    zero_shot: tuple[float, float, float, float]

    def value(self, setting: str, metric: str) -> float:
        row = self.standard if setting == "standard" else self.zero_shot
        return row[COLUMNS.index(metric)]


@dataclass(frozen=True)
class ReferenceTable:
    key: str
    provenance: str
    units: str
    rows: tuple[ReferenceRow, ...]

    def row(self, model: str) -> ReferenceRow:
        for r in self.rows:
            if r.model.lower() == model.lower():
                return r
        raise KeyError(f"{model!r} not in {self.key}")


def _r(model, is_no, *vals):
    return ReferenceRow(model, is_no, tuple(vals[:4]), tuple(vals[4:]))


ERA5_WIND = ReferenceTable(
    key="era5_wind_speed",
    provenance="published benchmark: ERA5 to ERA5 wind speed, standard x8 and zero-shot x4 to x8",
    units="MSE (m/s)^2, MAE m/s, IN m/s, PSNR dB",
    rows=(
        _r("bicubic", False, 1.23, 0.73, 14.82, 27.53, 1.23, 0.73, 14.82, 27.53),
        _r("SRCNN", False, 1.14, 0.7, 14.75, 27.83, 1.06, 0.67, 14.56, 28.18),
        _r("ESRGAN", False, 1.29, 0.75, 15.43, 27.3, 0.85, 0.6, 14.51, 29.1),
        _r("EDSR", False, 0.51, 0.44, 13.6, 31.33, 0.54, 0.45, 13.66, 31.1),
        _r("SwinIR", False, 0.37, 0.38, 12.12, 32.79, 0.51, 0.44, 13.22, 31.33),
        _r("FNO", True, 0.91, 0.66, 14.53, 28.84, 0.71, 0.54, 14.04, 29.9),
        _r("DFNO", True, 0.7, 0.54, 12.8, 29.94, 0.63, 0.5, 13.33, 30.43),
        _r("DUNO", True, 0.69, 0.53, 13.36, 30.04, 0.63, 0.5, 13.56, 30.44),
        _r("DAFNO", True, 0.65, 0.51, 13.77, 30.29, 0.66, 0.52, 14.01, 30.23),
        _r("DCNO", True, 0.45, 0.43, 12.98, 31.93, 0.92, 0.65, 14.89, 28.76),
    ),
)

ERA5_TO_WTK_WIND = ReferenceTable(
    key="era5_to_wtk_wind_speed",
    provenance="published benchmark: ERA5 to WTK wind speed, standard x5 and zero-shot x15",
    units="MSE (m/s)^2, MAE m/s, IN m/s, PSNR dB",
    rows=(
        _r("bicubic", False, 3.56, 1.18, 12.87, 18.4, 4.07, 1.25, 16.59, 19.91),
        _r("SRCNN", False, 3.16, 1.11, 12.62, 18.83, 3.65, 1.18, 16.39, 20.31),
        _r("ESRGAN", False, 2.75, 1.05, 13.06, 19.27, 3.12, 1.11, 15.96, 20.8),
        _r("EDSR", False, 2.46, 0.98, 11.89, 19.85, 2.92, 1.05, 15.61, 21.2),
        _r("SwinIR", False, 2.29, 0.94, 11.71, 20.12, 2.73, 1.02, 15.34, 21.43),
        _r("FNO", True, 5.69, 1.94, 14.45, 14.48, 5.45, 1.89, 17.82, 16.76),
        _r("DFNO", True, 3.04, 1.26, 12.56, 17.86, 3.53, 1.33, 16.14, 19.4),
        _r("DUNO", True, 2.81, 1.09, 12.11, 18.97, 3.3, 1.16, 15.85, 20.43),
        _r("DAFNO", True, 2.71, 1.02, 12.12, 19.47, 4.17, 1.19, 17.5, 19.51),
        _r("DCNO", True, 2.47, 0.99, 11.77, 19.79, 4.66, 1.32, 17.32, 19.51),
    ),
)

# MSE only: (ERA5, ERA5 zero-shot, ERA5->WTK, ERA5->WTK zero-shot)
LOCAL_LAYER_ABLATION = {
    "provenance": "published ablation: local layers in FNO, DFNO and DUNO (MSE)",
    "columns": ("ERA5", "ERA5 zero-shot", "ERA5->WTK", "ERA5->WTK zero-shot"),
    "rows": {
        ("FNO", False): (0.83, 0.74, 7.0, 7.5),
        ("FNO", True): (0.91, 0.71, 5.69, 5.45),
        ("DFNO", False): (0.7, 0.63, 3.04, 3.53),
        ("DFNO", True): (0.66, 0.66, 4.63, 5.31),
        ("DUNO", False): (0.69, 0.63, 2.81, 3.3),
        ("DUNO", True): (0.62, 0.67, 3.03, 3.79),
    },
}

EXTRACTOR_ABLATION = {
    "provenance": "published ablation: RRDB versus RSTB feature extractor, ERA5 to WTK (MSE)",
    "columns": ("ERA5->WTK", "ERA5->WTK zero-shot"),
    "rows": {
        ("DFNO", "RRDB"): (3.04, 3.53),
        ("DFNO", "RSTB"): (5.69, 6.19),
        ("DUNO", "RRDB"): (2.81, 3.3),
        ("DUNO", "RSTB"): (4.65, 5.15),
    },
}

# (parameters in millions, training hours on one H100), ERA5 to WTK setup
MODEL_SIZES = {
    "provenance": "published model sizes and training wall-clock, ERA5 to WTK setup",
    "rows": {
        "SRCNN": (0.063, 0.52),
        "ESRGAN": (39.18, 14.84),
        "EDSR": (2.14, 0.57),
        "SwinIR": (12.53, 10.77),
        "FNO": (1.24, 2.86),
        "DFNO": (9.88, 4.8),
        "DUNO": (9.36, 6.73),
        "DAFNO": (69.15, 7.64),
        "DCNO": (11.33, 4.83),
    },
}

MODES_SWEEP = {
    "provenance": "published FNO frequency-cutoff sweeps",
    "era5_to_wtk": {"modes": (16, 32, 64, 128, 160), "selected": 16},
    "era5": {"selected": 8},
}

TABLES = {t.key: t for t in (ERA5_WIND, ERA5_TO_WTK_WIND)}


def format_reference(table: ReferenceTable) -> str:
    head = f"{table.provenance} [{table.units}]\n"
    lines = [f"{'model':8s} {'NO':3s} " + " ".join(f"{c:>7s}" for c in COLUMNS * 2)]
    for r in table.rows:
        vals = " ".join(f"{v:7.2f}" for v in r.standard + r.zero_shot)
        lines.append(f"{r.model:8s} {'yes' if r.is_no else 'no':3s} {vals}")
    return head + "\n".join(lines) + "\n"
