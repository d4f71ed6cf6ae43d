"""Regenerate the bundled synthetic DPC-format snapshot CSVs.

The bundled data are a *synthetic* stand-in for the public Italian
first-wave surveillance feed: daily positives and daily deceased are
drawn from Richards negative-binomial models whose parameters echo the
first-wave national fits, with fixed seeds so the files are
byte-reproducible.  Auxiliary columns (recovered, ICU occupancy,
currently positive) are derived bookkeeping so that the cumulative
identities used by the parsers hold; the regional file splits the
national counts with fixed per-region shares.

Run from the repository root:

    python3 scripts/make_snapshot.py

and the two CSVs under src/richfit/datasets/ are rewritten in place.
"""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import numpy as np

from richfit.growth import RichardsParams, richards_diff
from richfit.model import ModelSpec, mean_daily

START = dt.date(2020, 2, 24)
T = 147                                  # 2020-02-24 .. 2020-07-19

# daily positives: weekday-modulated Richards incidence, NB(nu=60) noise
POSITIVES_SEED = 535
POS_CURVE = RichardsParams(b=0.0, r=215000.0, h=0.029, p=-32.29, s=77.74)
POS_BETA0, POS_BETA_WD = 5.42, -0.8      # log baseline, Mon/Tue dip
POS_WAVE_WD = -0.21                      # multiplicative Mon/Tue dip
POS_NU = 60.0

# daily deceased: constant-baseline Richards incidence, NB(nu=18) noise
DECEASED_SEED = 915
DEC_THETA = np.array([3.74, 49588.0, 0.025, -50.4, 170.6, 18.0])
DAY0_DECEASED = 7                        # cumulative deaths on day 0

# fixed first-wave-like regional shares (sum to 1); DPC region codes
REGIONS = [
    ("Lombardia", 3, 0.370),
    ("Piemonte", 1, 0.125),
    ("Emilia-Romagna", 8, 0.115),
    ("Veneto", 5, 0.078),
    ("Toscana", 9, 0.041),
    ("Liguria", 7, 0.040),
    ("Lazio", 12, 0.033),
    ("Marche", 11, 0.027),
    ("Campania", 15, 0.020),
    ("P.A. Trento", 22, 0.018),
    ("Puglia", 16, 0.018),
    ("Sicilia", 19, 0.014),
    ("Friuli Venezia Giulia", 6, 0.013),
    ("Abruzzo", 13, 0.013),
    ("P.A. Bolzano", 21, 0.011),
    ("Umbria", 10, 0.006),
    ("Sardegna", 20, 0.006),
    ("Valle d'Aosta", 2, 0.005),
    ("Calabria", 18, 0.005),
    ("Basilicata", 17, 0.001),
    ("Molise", 14, 0.001),
]


def weekday_dummy(start: dt.date, n: int) -> np.ndarray:
    return np.array([1.0 if (start + dt.timedelta(days=i)).weekday() in (0, 1)
                     else 0.0 for i in range(n)])


def simulate_positives() -> np.ndarray:
    wd = weekday_dummy(START, T)
    times = np.arange(1, T + 1, dtype=float)
    lam = richards_diff(times, POS_CURVE)
    mu = np.exp(POS_BETA0 + POS_BETA_WD * wd) + np.exp(POS_WAVE_WD * wd) * lam
    rng = np.random.default_rng(POSITIVES_SEED)
    return rng.poisson(rng.gamma(POS_NU, mu / POS_NU)).astype(int)


def simulate_deceased() -> np.ndarray:
    spec = ModelSpec(family="negbin", baseline="constant")
    times = np.arange(1, T, dtype=float)          # T-1 daily increments
    mu = mean_daily(spec, DEC_THETA, times)
    rng = np.random.default_rng(DECEASED_SEED)
    return rng.poisson(rng.gamma(DEC_THETA[-1], mu / DEC_THETA[-1])).astype(int)


def build_national():
    dates = [START + dt.timedelta(days=i) for i in range(T)]
    pos = simulate_positives()
    dec_daily = simulate_deceased()               # length T-1, from day 1
    cum_pos = np.cumsum(pos)
    deceduti = DAY0_DECEASED + np.concatenate([[0], np.cumsum(dec_daily)])

    # recovered: 80% of the cumulative positives two weeks earlier, with
    # one downward revision (a reporting correction) in mid June
    lagged = np.concatenate([np.zeros(14), cum_pos[:-14]])
    recovered = np.floor(0.80 * lagged).astype(int)
    corr = dates.index(dt.date(2020, 6, 15))
    recovered[corr] = recovered[corr - 1] - 300

    active = cum_pos + 221 - (recovered - recovered[0]) - (deceduti - DAY0_DECEASED)
    active = np.maximum(active, 40)
    icu = np.maximum((0.035 * active).astype(int), 1)
    return dates, pos, deceduti, recovered, icu, active


def largest_remainder_split(total: int, shares) -> list:
    """Integer allocation of a total across shares, remainders greedily."""
    raw = np.asarray(shares) * total
    base = np.floor(raw).astype(int)
    short = int(total - base.sum())
    order = np.argsort(raw - base)[::-1]
    base[order[:short]] += 1
    return base.tolist()


def build_regional(national):
    dates, pos, deceduti, recovered, icu, active = national
    shares = np.array([s for _, _, s in REGIONS])
    shares = shares / shares.sum()
    n_reg = len(REGIONS)

    def split_daily(series):
        """Allocate a daily (non-cumulative) series across regions."""
        out = np.zeros((len(series), n_reg), dtype=int)
        for t, tot in enumerate(series):
            out[t] = largest_remainder_split(int(tot), shares)
        return out

    def split_cumulative(series, day0_alloc=None):
        """Allocate increments, then accumulate so regions stay monotone."""
        inc = np.diff(series, prepend=0)
        alloc = np.zeros((len(series), n_reg), dtype=int)
        for t, d in enumerate(inc):
            if d >= 0:
                alloc[t] = largest_remainder_split(int(d), shares)
            else:
                alloc[t, 0] = int(d)      # corrections land on Lombardia
        if day0_alloc is not None:
            alloc[0] = day0_alloc
        return np.cumsum(alloc, axis=0)

    reg_pos = split_daily(pos)
    reg_icu = split_daily(icu)
    reg_active = split_daily(active)
    reg_dec = split_cumulative(deceduti,
                               day0_alloc=largest_remainder_split(
                                   int(deceduti[0]), shares))
    reg_rec = split_cumulative(recovered)
    rows = []
    for t, date in enumerate(dates):
        for j, (name, code, _) in enumerate(REGIONS):
            rows.append({
                "data": f"{date.isoformat()}T17:00:00",
                "codice_regione": code,
                "denominazione_regione": name,
                "nuovi_positivi": int(reg_pos[t, j]),
                "deceduti": int(reg_dec[t, j]),
                "dimessi_guariti": int(reg_rec[t, j]),
                "terapia_intensiva": int(reg_icu[t, j]),
                "totale_positivi": int(reg_active[t, j]),
            })
    return rows


def main():
    out_dir = Path(__file__).resolve().parents[1] / "src" / "richfit" / "datasets"
    national = build_national()
    dates, pos, deceduti, recovered, icu, active = national

    nat_path = out_dir / "dpc-covid19-ita-andamento-nazionale.csv"
    nat_cols = ["data", "nuovi_positivi", "deceduti", "dimessi_guariti",
                "terapia_intensiva", "totale_positivi"]
    with open(nat_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=nat_cols)
        w.writeheader()
        for t, date in enumerate(dates):
            w.writerow({
                "data": f"{date.isoformat()}T17:00:00",
                "nuovi_positivi": int(pos[t]),
                "deceduti": int(deceduti[t]),
                "dimessi_guariti": int(recovered[t]),
                "terapia_intensiva": int(icu[t]),
                "totale_positivi": int(active[t]),
            })

    reg_path = out_dir / "dpc-covid19-ita-regioni.csv"
    reg_cols = ["data", "codice_regione", "denominazione_regione"] + nat_cols[1:]
    reg_rows = build_regional(national)
    with open(reg_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=reg_cols)
        w.writeheader()
        for row in reg_rows:
            w.writerow(row)
    print(f"wrote {nat_path} ({T} rows) and {reg_path} ({len(reg_rows)} rows)")


if __name__ == "__main__":
    main()
