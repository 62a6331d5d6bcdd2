import streamlit as st

from utils.app import config_editor, guarded, run_distance

st.title("Distance")
st.caption("W_K by shooting (an upper estimate) and the exact radial W₁ to the configured target.")

config_text, config = config_editor()
if config is None:
    st.stop()

st.write(f"Target: **{config.distance.target}**, mass {config.distance.target_mass:g}")
if not st.button("Estimate", type="primary"):
    st.stop()

result = guarded(run_distance, config_text, "Distance")
if result is None:
    st.stop()

c1, c2, c3 = st.columns(3)
c1.metric("W_K estimate", f"{result['wk_estimate']:.6g}")
c2.metric("W₁", f"{result['w1']:.6g}")
c3.metric("Terminal L¹ residual", f"{result['residual']:.2e}")

if not result["converged"]:
    st.warning(f"Shooting did not converge after {result['iterations']} evaluations.")
elif result["wk_estimate"]:
    st.success(f"W₁ / W_K = {result['w1'] / result['wk_estimate']:.4f}")
