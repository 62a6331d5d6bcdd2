import streamlit as st

from utils.app import config_editor, guarded, run_verify

st.title("Verify")
st.caption("Identity suite on the configured grid and two refinements. This takes a while at n=513.")

config_text, config = config_editor()
if config is None:
    st.stop()

if not st.button("Run identity suite", type="primary"):
    st.stop()

result = guarded(run_verify, config_text, "Verification")
if result is None:
    st.stop()
st.session_state.verify_payload = result

entries = result["entries"]
failed = [e for e in entries if not e["passed"]]
if failed:
    st.error(f"{len(failed)} of {len(entries)} checks failed: {', '.join(e['name'] for e in failed)}")
else:
    st.success(f"All {len(entries)} checks passed.")

st.dataframe(entries, use_container_width=True)
