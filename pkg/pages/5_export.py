import streamlit as st

from utils.app import guarded, run_simulation
from utils.config import format_config, parse_config
from utils.diagnostics import TRACE_COLUMNS
from utils.store import json_text, trace_csv_text

st.title("Export")
st.caption("Download the last simulation trace and reports in the same formats the command line writes.")

config_text = st.session_state.get("sim_text")
if not config_text:
    st.info("No simulation yet. Run one on the Simulate page first.")
    st.stop()

result = guarded(run_simulation, config_text, "Simulation")
if result is None:
    st.stop()

st.success(f"**{len(result['records'])}** trace row(s) available.")

# ── Trace CSV ────────────────────────────────────────────────────────────────
csv_bytes = trace_csv_text(result["records"], failed_at=result["failed_at"]).encode("utf-8")
st.download_button(
    label="⬇️ Download trace.csv",
    data=csv_bytes,
    file_name="trace.csv",
    mime="text/csv",
    type="primary",
)
st.caption("Columns: " + " · ".join(TRACE_COLUMNS))

# ── Reports ──────────────────────────────────────────────────────────────────
st.download_button(
    label="⬇️ Download report.json",
    data=json_text(result["report"]).encode("utf-8"),
    file_name="report.json",
    mime="application/json",
)
st.download_button(
    label="⬇️ Download config.resolved",
    data=format_config(parse_config(config_text)).encode("utf-8"),
    file_name="config.resolved",
    mime="text/plain",
)

verify_payload = st.session_state.get("verify_payload")
with st.expander("Identity suite (verify.json)"):
    if verify_payload is None:
        st.caption("Run the Verify page to export its results.")
    else:
        st.download_button(
            label="⬇️ Download verify.json",
            data=json_text(verify_payload).encode("utf-8"),
            file_name="verify.json",
            mime="application/json",
        )
