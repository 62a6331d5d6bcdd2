import logging

import streamlit as st

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

st.set_page_config(
    page_title="Isotropic Landau Lab",
    page_icon=None,
    layout="wide",
)

pages = [
    st.Page("pages/1_simulate.py",  title="Simulate",  icon=None),
    st.Page("pages/2_geodesic.py",  title="Geodesic",  icon=None),
    st.Page("pages/3_distance.py",  title="Distance",  icon=None),
    st.Page("pages/4_verify.py",    title="Verify",    icon=None),
    st.Page("pages/5_export.py",    title="Export",    icon=None),
]

pg = st.navigation(pages)
pg.run()
