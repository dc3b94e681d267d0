"""Fitted envelope constants: series terms, frozen chain vs frozen diffusion, discrete series terms.

Usage: python3 scripts/envelope_diagnostics.py
"""

from __future__ import annotations

from parametrix.experiments import series_term_envelope_fit, frozen_chain_gap_constants, discrete_term_envelope_fit
from parametrix.model import build_model

MODELS = {
    "sin1d": {"family": "sin1d"},
    "sin1d, e=0.25": {"family": "sin1d", "e": 0.25},
    "sin1d, skew": {"family": "sin1d", "innovation": "skew", "skew": 0.8},
}


def main() -> None:
    for label, cfg in MODELS.items():
        model = build_model(cfg)
        print(f"== {label}")
        fit = series_term_envelope_fit(model, 0.0, 0.25, R=4)
        C, C1 = fit.constants
        norms = ", ".join(f"{a:.3e}" for a in fit.term_norms)
        print(f"  series terms r<=4: C={C:.4g} C1={C1:.4g} holds={fit.bound_holds} norms [{norms}]")
        trend = frozen_chain_gap_constants(model, (8, 16, 32))
        consts = ", ".join(f"{c:.4g}" for c in trend.constants)
        print(f"  frozen chain gap constants n=8,16,32: [{consts}] slope vs log n {trend.slope_vs_log_n:.3f}")
        C6, norms6 = discrete_term_envelope_fit(model, n=8, R=3)
        print(f"  discrete series terms n=8, r<=3: C={C6:.4g} norms [{', '.join(f'{a:.3e}' for a in norms6)}]")


if __name__ == "__main__":
    main()
