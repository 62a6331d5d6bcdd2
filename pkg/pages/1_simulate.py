from dataclasses import asdict

import streamlit as st

from utils.app import config_editor, guarded, run_simulation

st.title("Simulate")
st.caption("Isotropic Landau flow from the configured initial density, with the diagnostics trace.")

config_text, config = config_editor()
if config is None:
    st.stop()

if st.button("Run simulation", type="primary"):
    st.session_state.sim_text = config_text
if st.session_state.get("sim_text") != config_text:
    st.info("Adjust the configuration if needed, then run.")
    st.stop()

result = guarded(run_simulation, config_text, "Simulation")
if result is None:
    st.stop()

report = result["report"]
if result["error"]:
    st.error(f"Run aborted at t={result['failed_at']:.6g}: {result['error']}")

# ── Summary ──────────────────────────────────────────────────────────────────
c1, c2, c3, c4 = st.columns(4)
c1.metric("Final time", f"{report['t_final']:.4g}")
c2.metric("Rows", report["rows"])
c3.metric("Max mass drift", f"{report['mass_drift_max']:.2e}")
c4.metric("Entropy monotone", "yes" if report["entropy_monotone"] else "no")

if not report["second_moment_increasing"]:
    st.warning("Second moment decreased between output rows.")
rate = report.get("rate_bound")
if rate:
    (st.success if rate["violations"] == 0 else st.warning)(f"Rate bound: {rate['status']}")

# ── Trace ────────────────────────────────────────────────────────────────────
with st.expander("Trace", expanded=True):
    st.dataframe([asdict(r) for r in result["records"]], use_container_width=True)

with st.expander("Report"):
    st.json(report)
