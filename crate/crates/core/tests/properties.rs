//! Property tests for quantization, encoding, sampling geometry and the pyramid.

use ntc_core::encoding::{positional_encoding, TILE};
use ntc_core::grid::taps;
use ntc_core::input::{assemble_input, mip_resolution};
use ntc_core::mlp::{gelu, hardgelu};
use ntc_core::pyramid::{feature_level_for_mip, grid_geometry, mips_for_level, num_feature_levels};
use ntc_core::texture::mip_count;
use ntc_core::{AddressMode, FeaturePyramid, Profile, QuantSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mode(wrap: bool) -> AddressMode {
    if wrap {
        AddressMode::Wrap
    } else {
        AddressMode::Clamp
    }
}

proptest! {
    #[test]
    fn quantize_is_idempotent_and_in_range(bits in 1u8..=8, v in -4.0f64..4.0) {
        let q = QuantSpec::new(bits);
        let (idx, center) = q.quantize(v);
        prop_assert!(idx >= q.min_index() && idx <= q.max_index());
        prop_assert_eq!(q.quantize(center), (idx, center));
        prop_assert!(q.to_code(idx) < q.levels());
        prop_assert_eq!(q.from_code(q.to_code(idx)), idx);
        if v >= q.lo() && v <= q.hi() {
            prop_assert!((center - v).abs() <= q.bin() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn noise_stays_within_half_a_bin(bits in 1u8..=8, v in -1.0f64..1.0, seed in any::<u64>()) {
        let q = QuantSpec::new(bits);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let n = q.inject_noise(v, &mut rng);
            prop_assert!((n - v).abs() < q.bin() / 2.0);
        }
    }

    #[test]
    fn encoding_tiles_every_eight_texels(x in -1000i64..1000, y in -1000i64..1000, kx in -5i64..5, ky in -5i64..5) {
        let a = positional_encoding(x, y);
        prop_assert_eq!(a, positional_encoding(x + kx * TILE, y + ky * TILE));
        prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn tap_weights_are_a_partition_of_unity(
        log_grid in 0u32..7,
        extra in 0u32..4,
        x in 0i64..4096,
        y in 0i64..4096,
        wrap in any::<bool>(),
    ) {
        let grid_res = 1usize << log_grid;
        let mip_res = grid_res << extra;
        let (x, y) = (x % mip_res as i64, y % mip_res as i64);
        let t = taps(grid_res, x, y, mip_res, mode(wrap));
        prop_assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(t.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
        prop_assert!(t.cells.iter().all(|&c| c < grid_res * grid_res));
    }

    #[test]
    fn feature_levels_partition_the_chain(log_w in 0u32..15) {
        let num_mips = mip_count(1 << log_w);
        let levels = num_feature_levels(num_mips);
        let mut next = 0;
        for j in 0..levels {
            let (first, last) = mips_for_level(j, num_mips);
            prop_assert_eq!(first, next);
            prop_assert!(last >= first);
            for m in first..=last {
                prop_assert_eq!(feature_level_for_mip(m, num_mips).unwrap(), j);
            }
            next = last + 1;
        }
        prop_assert_eq!(next, num_mips);
        prop_assert!(feature_level_for_mip(num_mips, num_mips).is_err());
    }

    #[test]
    fn grid_geometry_shrinks_by_four(profile in 0usize..4, log_w in 2u32..14, level in 0usize..6) {
        let p = &Profile::all()[profile];
        let w = 1usize << log_w;
        let (r0, r1) = grid_geometry(p, w, level);
        prop_assert_eq!(r0, ((w / p.g0_ratio as usize) >> (2 * level)).max(1));
        prop_assert_eq!(r1, (r0 / 2).max(1));
    }

    #[test]
    fn input_layout(profile in 0usize..4, log_w in 2u32..8, seed in any::<u64>(), wrap in any::<bool>()) {
        let p = &Profile::all()[profile];
        let w = 1usize << log_w;
        let num_mips = mip_count(w);
        let mut pyr = FeaturePyramid::<f32>::zeros(p, w, num_mips);
        pyr.randomize(&mut ChaCha8Rng::seed_from_u64(seed));
        let mip = (seed as usize) % num_mips;
        let res = mip_resolution(mip, num_mips) as i64;
        let (x, y) = ((seed >> 8) as i64 % res, (seed >> 20) as i64 % res);
        let v = assemble_input(p, &pyr, mip, num_mips, x, y, mode(wrap)).unwrap();
        prop_assert_eq!(v.len(), p.input_width());
        let pe = positional_encoding(x, y);
        let k = 4 * p.c0 as usize + p.c1 as usize;
        for (a, b) in v[k..k + 12].iter().zip(pe) {
            prop_assert_eq!(*a as f64, b);
        }
        let lod = if num_mips == 1 { 0.0 } else { mip as f64 / (num_mips - 1) as f64 };
        prop_assert_eq!(v[k + 12], lod as f32);
    }

    #[test]
    fn hardgelu_tracks_gelu(x in -6.0f64..6.0) {
        prop_assert!((hardgelu(x) - gelu(x)).abs() <= 0.1003);
    }
}
