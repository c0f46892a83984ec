use proptest::prelude::*;
use shadowgraph::imgio::LabelMap;
use shadowgraph::measure::region_props;
use shadowgraph::synth::{render_field, rng_for, sample_bubbles, BubbleSpec, SynthConfig};

fn bubble(r_eq: f64, aspect: f64, theta: f64, cx: f64, cy: f64) -> BubbleSpec {
    BubbleSpec { cx, cy, r_eq, aspect, theta, blur_sigma: 1.0 }
}

fn gt_regions(b: BubbleSpec, size: usize) -> Vec<shadowgraph::measure::Region> {
    let cfg = SynthConfig { width: size, height: size, ..SynthConfig::default() };
    let s = render_field(&[b], &cfg, &mut rng_for(0));
    let labels = s.gt_binary.data().iter().map(|&v| (v > 0.5) as u32).collect();
    region_props(&LabelMap::new(size, size, labels).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ellipse_area_equals_disc_area(r_eq in 0.5f64..20.0, aspect in 1.0f64..5.0, theta in 0.0f64..3.2) {
        let b = bubble(r_eq, aspect, theta, 0.0, 0.0);
        let disc = std::f64::consts::PI * r_eq * r_eq;
        prop_assert!((b.area() - disc).abs() <= 1e-12 * disc);
    }

    #[test]
    fn ground_truth_mask_recovers_radius(
        r_eq in 3.0f64..9.0,
        theta in 0.0f64..3.2,
        cx in 31.0f64..33.0,
        cy in 31.0f64..33.0,
    ) {
        let g = gt_regions(bubble(r_eq, 1.0, theta, cx, cy), 64);
        prop_assert_eq!(g.len(), 1);
        prop_assert!((g[0].r_eq - r_eq).abs() <= 0.5, "r_eq {} vs {}", g[0].r_eq, r_eq);
    }

    // Same rasterization limit as the measurement tests: a radius-3 disc off
    // the pixel grid already measures an aspect near 1.18.
    #[test]
    #[ignore = "rasterization limit for small or thin ellipses, see README"]
    fn ground_truth_mask_recovers_shape(
        r_eq in 3.0f64..9.0,
        aspect in 1.0f64..2.0,
        theta in 0.0f64..3.2,
        cx in 31.0f64..33.0,
        cy in 31.0f64..33.0,
    ) {
        let g = gt_regions(bubble(r_eq, aspect, theta, cx, cy), 64);
        prop_assert_eq!(g.len(), 1);
        prop_assert!((g[0].r_eq - r_eq).abs() <= 0.5);
        prop_assert!((g[0].aspect - aspect).abs() <= 0.05 * aspect, "aspect {} vs {}", g[0].aspect, aspect);
    }

    #[test]
    fn rendered_image_in_unit_range(seed in any::<u64>(), noise in 0.0f64..0.5, grad in 0.0f64..0.5) {
        let cfg = SynthConfig { noise_sigma: noise, gradient_amplitude: grad, seed, ..SynthConfig::desk() };
        let mut rng = rng_for(seed);
        let bubbles = sample_bubbles(&cfg, &mut rng).unwrap();
        let s = render_field(&bubbles, &cfg, &mut rng);
        prop_assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for b in &bubbles {
            let (ex, ey) = b.half_extents();
            prop_assert!(b.cx - ex >= -0.5 && b.cx + ex <= cfg.width as f64 - 0.5);
            prop_assert!(b.cy - ey >= -0.5 && b.cy + ey <= cfg.height as f64 - 0.5);
            prop_assert!((cfg.r_min..=cfg.r_max).contains(&b.r_eq));
        }
    }

    #[test]
    fn clean_far_field_is_background(seed in any::<u64>(), level in 0.3f64..1.0) {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            gradient_amplitude: 0.0,
            background_level: level,
            ..SynthConfig::desk()
        };
        let b = bubble(4.0, 1.0, 0.0, 10.0, 10.0);
        let s = render_field(&[b], &cfg, &mut rng_for(seed));
        // Far from the bubble and its blur footprint.
        for y in 30..64 {
            for x in 30..64 {
                prop_assert_eq!(s.image.get(x, y), level as f32);
            }
        }
    }
}
