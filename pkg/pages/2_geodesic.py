import streamlit as st

from utils.app import config_editor, guarded, run_geodesic

st.title("Geodesic")
st.caption("Hamiltonian geodesic from the initial density with Φ₀ = amplitude·exp(−r²/2w²).")

config_text, config = config_editor()
if config is None:
    st.stop()

if not st.button("Integrate", type="primary"):
    st.stop()

result = guarded(run_geodesic, config_text, "Geodesic")
if result is None:
    st.stop()

c1, c2, c3 = st.columns(3)
c1.metric("H₀", f"{result['hamiltonian_0']:.6e}")
c2.metric("Max relative H drift", f"{result['max_relative_drift']:.2e}")
c3.metric("Path action / 2H·T", f"{result['path_action'] / result['expected_action']:.6f}" if result["expected_action"] else "n/a")

if any(row["min_rho"] < 0.0 for row in result["rows"]):
    st.warning("The path undershoots zero density somewhere; entropy is evaluated on the positive part.")

st.dataframe(result["rows"], use_container_width=True)
