"""
Fully synthetic clean/noisy Bayer RAW pair generator for denoiser training.

Modules:
- core_types: image containers, CFA patterns, splittable RNG streams, FNV-1a hashing
- raw_io: bit-exact 16-bit RAW/RGB container and PNG previews
- scene_gen: procedural scene description, sampling and JSON
- textures: procedural material evaluation
- renderer: ray caster over analytic primitives, lens distortion
- diversity: edge-ratio and colour-entropy gate for rendered batches
- calibration: mean-variance noise profile fitting from burst stacks
- unprocess: inverse ISP (tone, gamma, CCM, white balance) and mosaicking
- noise_inject: calibrated heteroscedastic noise synthesis and oracle bursts
- pipeline: one clean/noisy pair end to end, noise-level sweeps
- dataset_builder: sharded, manifest-indexed dataset builds and verification
- metrics: PSNR/SSIM and the lux/label evaluation table
- config: defaults and JSON-backed build configuration
- visualizations: diagnostic figures
"""
