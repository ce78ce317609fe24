"""
Streamlit UI for exploring single synthetic clean/noisy pairs.

Run with:
    streamlit run app_streamlit.py
"""

from __future__ import annotations

from pathlib import Path

import streamlit as st

from src.calibration import NoiseProfile
from src.diversity import color_entropy, edge_ratio
from src.pipeline import explore_pair, summarize_pair
from src.scene_gen import COMPOSITION_MODES, GeneratorConfig
from src.visualizations import plot_pair_preview

PROFILE_DIR = Path(__file__).parent / "configs" / "profiles"


def available_profiles() -> dict[str, NoiseProfile]:
    profiles = {}
    for path in sorted(PROFILE_DIR.glob("*.json")):
        profile = NoiseProfile.load(path)
        profiles[profile.label] = profile
    return profiles


def main() -> None:
    st.title("Synthetic RAW Pair Explorer")

    st.markdown(
        """
This tool generates one **fully synthetic clean/noisy Bayer RAW pair**.

### How It Works
1. **Sample** a procedural scene (shapes, materials, rotations, background, lights) from the seed
2. **Render** it noise-free with the built-in ray caster
3. **Unprocess** the linear RGB render into a clean Bayer mosaic (inverse white balance and CCM)
4. **Inject** calibrated signal-dependent noise, `Var(x) = s · (k·x + σ²)`
        """
    )

    profiles = available_profiles()

    with st.sidebar:
        st.header("Scene")

        seed = st.number_input("Seed", min_value=0, max_value=2**31 - 1, value=0, step=1)
        resolution = st.selectbox("Resolution", options=[64, 128, 256, 512], index=2)
        composition = st.selectbox(
            "Composition Mode",
            options=list(COMPOSITION_MODES),
            index=list(COMPOSITION_MODES).index("full"),
            help="Which scene properties are randomized",
        )
        samples_per_pixel = st.selectbox("Samples per Pixel", options=[1, 4, 9], index=1)

        st.header("Noise")

        if not profiles:
            st.error(f"No noise profiles found in {PROFILE_DIR}.")
            return
        profile_label = st.selectbox("Camera Profile", options=list(profiles))
        gain_scale = st.number_input(
            "Gain Scale (s)",
            min_value=0.25,
            max_value=4.0,
            value=1.0,
            step=0.25,
            help="Multiplier on both k and σ²",
        )
        pattern = st.selectbox("CFA Pattern", options=["RGGB", "BGGR", "GRBG", "GBRG"], index=0)

        generate_button = st.button("Generate Pair", type="primary")

    if not generate_button:
        st.info("Configure the scene in the sidebar and click **Generate Pair**.")
        return

    generator = GeneratorConfig(
        width=int(resolution),
        height=int(resolution),
        composition=composition,
        samples_per_pixel=int(samples_per_pixel),
    )
    with st.spinner("Rendering scene and synthesizing noise..."):
        try:
            result = explore_pair(
                int(seed),
                profiles[profile_label],
                gain_scale=float(gain_scale),
                generator=generator,
                pattern=pattern,
            )
        except ValueError as exc:
            st.error(f"Error during generation: {exc}")
            return

    st.success(f"✅ Pair generated in {result.elapsed:.2f}s")

    st.subheader("Frames")
    st.pyplot(plot_pair_preview(result.rgb, result.clean, result.noisy))
    st.caption("Rendered linear RGB (sRGB-encoded for display) and the clean and noisy mosaics shown as grey.")

    st.subheader("Scene Diversity")
    col1, col2 = st.columns(2)
    col1.metric("Edge Ratio", f"{edge_ratio(result.rgb):.3f}", help="Share of pixels with Sobel magnitude > 0.1")
    col2.metric("Colour Entropy", f"{color_entropy(result.rgb):.2f} bits", help="8x8x8 RGB histogram, max 9 bits")

    st.subheader("Noisy vs Clean")
    col1, col2 = st.columns(2)
    col1.metric("PSNR", f"{result.psnr:.2f} dB")
    col2.metric("SSIM", f"{result.ssim:.4f}")

    with st.expander("ℹ️ Provenance"):
        st.code(summarize_pair(result))


if __name__ == "__main__":
    main()
