"""
Tolerances used by the identity suite (`utils.verify`), in one place.

Each entry is (tolerance, note). Relative tolerances compare against the
named reference quantity; "scale" means the local part of the metric,
∫ρLρ|∇φ|². Entries marked "reported" are measured and written to
verify.json but do not decide pass/fail on their own.
"""

TOLERANCES: dict[str, tuple[float, str]] = {
    # dissipation
    "dissipation_gaussian_abs": (1e-3, "|D(M) − 0.08979|"),
    "dissipation_triple_rel": (1e-2, "pairwise relative gap of closed form, double integral, metric"),
    "dissipation_scaling_rel": (1e-2, "|D(ρ_λ)/(λ³D(ρ)) − 1| at λ = 2"),
    # flow
    "h_theorem_rel": (1e-3, "|dE/dt + D| / D at interior output rows"),
    "mass_drift_abs": (1e-6, "max |mass(t) − mass(0)|"),
    "entropy_step_abs": (1e-10, "entropy increase allowed between output rows"),
    "second_moment_step_abs": (1e-10, "second-moment decrease allowed between output rows"),
    "kappa_gaussian_abs": (1e-7, "|κ(t=0) − 0.0178846| for the standard Gaussian"),
    "kappa_fisher_rel": (1e-6, "lhs ≤ tol·|dE/dt|"),
    "rate_bound_slack": (1e-6, "dE/dt ≤ bound + slack on rows where eqnpos ≥ 0"),
    "supnorm_holdout_rel": (5e-2, "held-out sup ≤ (1 + tol) × fitted bound"),
    # structure
    "gradient_flow_rel": (1e-3, "‖𝒦(log ρ) − rhs‖∞ / ‖rhs‖∞"),
    "gradient_flow_order_lo": (3.0, "error ratio between n and 2n−1, lower bound"),
    "gradient_flow_order_hi": (5.0, "error ratio between n and 2n−1, upper bound"),
    "divergence_identity_abs": (1e-4, "max |∇·(−Δ)^{-1}(−∇ρ) − ρ|"),
    "hessian_rel": (1e-2, "|2·Hess − d²E/dt²| / |d²E/dt²| along the flow, t ∈ [0.1, 1]"),
    "hessian_scaling_rel": (1e-2, "|Hess(ρ_λ)/(λ⁶Hess(ρ)) − 1| per term"),
    "metric_positivity": (1e-10, "metric_form(ρ, φ, φ) ≥ −tol·scale"),
    "metric_symmetry": (1e-12, "|g(φ₁, φ₂) − g(φ₂, φ₁)| ≤ tol·scale"),
    # geodesics and distances
    "hamiltonian_drift_rel": (1e-6, "max relative H drift along the geodesic, run on the n = 2(n−1)+1 grid"),
    "time_reversal_l1": (1e-4, "L¹ distance to ρ₀ after forward, flip, forward"),
    "path_action_rel": (1e-3, "|action − 2H| / 2H on the geodesic path"),
    "w1_closed_form_abs": (1e-4, "w1_radial against 3/4 and 3R/4"),
    "w1_lp_rel": (5e-2, "|W₁ LP − W₁ radial| / W₁ radial"),
    "w1_wk_stability_rel": (1e-1, "W₁/W_K ratio change between resolutions"),
    "shooting_recovery_rel": (1e-2, "|W_K estimate − √(2H*)| / √(2H*)"),
    "poincare_stability_abs": (1e-3, "C_ε change between resolutions"),
    "metric_cloud_rel": (1.5e-1, "radial metric against a 17³ Cartesian evaluation; the cloud quadrature is coarse"),
    "path_infimum_slack": (1e-2, "W_K² ≤ (1 + slack) × action of hand-built paths"),
    "eqnpos_resolution_rel": (1e-3, "eqnpos change between resolutions"),
    "hessian_geodesic_rel": (1e-2, "|Hess − d²E/dt² along the geodesic| / |d²E/dt²|"),
}


def tolerance(name: str) -> float:
    return TOLERANCES[name][0]
