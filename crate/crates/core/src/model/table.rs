//! Reference table of the 30 benchmarked architectures with their published
//! trainable-parameter counts and F1 statistics.

/// One benchmarked architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub index: usize,
    /// Configuration string or preset name.
    pub config: &'static str,
    pub params: usize,
    pub f1_median: f64,
    pub f1_std: f64,
}

pub const REFERENCE_TABLE: [ReferenceRow; 30] = [
    ReferenceRow {
        index: 1,
        config: "8; cna; [4, 4, 8, 8, 16, 16, 20]; [1, 1, 1, 1, 1, 1, 1]",
        params: 3658,
        f1_median: 0.826,
        f1_std: 0.004,
    },
    ReferenceRow {
        index: 2,
        config: "32; cna; [4, 4, 8, 8, 16, 16, 20]; [1, 1, 1, 1, 1, 1, 1]",
        params: 4258,
        f1_median: 0.826,
        f1_std: 0.004,
    },
    ReferenceRow {
        index: 3,
        config: "8; cnacna; [4, 4, 8, 8, 16, 16, 20]; [1, 1, 1, 1, 1, 1, 1]",
        params: 7026,
        f1_median: 0.884,
        f1_std: 0.002,
    },
    ReferenceRow {
        index: 4,
        config: "8; cna; [4, 4, 8, 8, 16, 16, 20]; [2, 2, 2, 2, 2, 2, 2]",
        params: 7026,
        f1_median: 0.879,
        f1_std: 0.006,
    },
    ReferenceRow {
        index: 5,
        config: "32; cnacna; [4, 4, 8, 8, 16, 16, 20]; [1, 1, 1, 1, 1, 1, 1]",
        params: 7626,
        f1_median: 0.889,
        f1_std: 0.005,
    },
    ReferenceRow {
        index: 6,
        config: "32; cna; [4, 4, 8, 8, 16, 16, 20]; [2, 2, 2, 2, 2, 2, 2]",
        params: 7626,
        f1_median: 0.884,
        f1_std: 0.004,
    },
    ReferenceRow {
        index: 7,
        config: "8; cna; [4, 4, 8, 8, 16, 16, 20]; [2, 3, 4, 5, 4, 3, 2]",
        params: 10522,
        f1_median: 0.884,
        f1_std: 0.004,
    },
    ReferenceRow {
        index: 8,
        config: "32; cna; [4, 4, 8, 8, 16, 16, 20]; [2, 3, 4, 5, 4, 3, 2]",
        params: 11122,
        f1_median: 0.887,
        f1_std: 0.001,
    },
    ReferenceRow {
        index: 9,
        config: "8; cnacna; [4, 4, 8, 8, 16, 16, 20]; [2, 2, 2, 2, 2, 2, 2]",
        params: 13762,
        f1_median: 0.894,
        f1_std: 0.007,
    },
    ReferenceRow {
        index: 10,
        config: "32; cnacna; [4, 4, 8, 8, 16, 16, 20]; [2, 2, 2, 2, 2, 2, 2]",
        params: 14362,
        f1_median: 0.898,
        f1_std: 0.008,
    },
    ReferenceRow {
        index: 11,
        config: "8; cnacna; [4, 4, 8, 8, 16, 16, 20]; [2, 3, 4, 5, 4, 3, 2]",
        params: 20754,
        f1_median: 0.896,
        f1_std: 0.006,
    },
    ReferenceRow {
        index: 12,
        config: "32; cnacna; [4, 4, 8, 8, 16, 16, 20]; [2, 3, 4, 5, 4, 3, 2]",
        params: 21354,
        f1_median: 0.896,
        f1_std: 0.006,
    },
    ReferenceRow {
        index: 13,
        config: "32; cnacna; [4, 8, 12, 20, 32, 52, 84]; [1, 1, 1, 1, 1, 1, 1]",
        params: 64202,
        f1_median: 0.901,
        f1_std: 0.005,
    },
    ReferenceRow {
        index: 14,
        config: "32; ncnacn; [4, 8, 12, 20, 32, 52, 84]; [1, 1, 1, 1, 1, 1, 1]",
        params: 64522,
        f1_median: 0.892,
        f1_std: 0.008,
    },
    ReferenceRow {
        index: 15,
        config: "32; cnacna; [4, 8, 12, 20, 32, 52, 84]; [2, 3, 4, 5, 4, 3, 2]",
        params: 172154,
        f1_median: 0.891,
        f1_std: 0.007,
    },
    ReferenceRow {
        index: 16,
        config: "32; ncnacn; [4, 8, 12, 20, 32, 52, 84]; [2, 3, 4, 5, 4, 3, 2]",
        params: 173314,
        f1_median: 0.896,
        f1_std: 0.007,
    },
    ReferenceRow {
        index: 17,
        config: "8; cna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]",
        params: 176450,
        f1_median: 0.862,
        f1_std: 0.002,
    },
    ReferenceRow {
        index: 18,
        config: "32; cna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]",
        params: 177050,
        f1_median: 0.862,
        f1_std: 0.004,
    },
    ReferenceRow {
        index: 19,
        config: "8; cna; [4, 8, 16, 32, 64, 128, 256]; [2, 2, 2, 2, 2, 2, 2]",
        params: 439594,
        f1_median: 0.891,
        f1_std: 0.002,
    },
    ReferenceRow {
        index: 20,
        config: "8; cnacna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]",
        params: 439594,
        f1_median: 0.899,
        f1_std: 0.002,
    },
    ReferenceRow {
        index: 21,
        config: "32; cna; [4, 8, 16, 32, 64, 128, 256]; [2, 2, 2, 2, 2, 2, 2]",
        params: 440194,
        f1_median: 0.891,
        f1_std: 0.003,
    },
    ReferenceRow {
        index: 22,
        config: "32; cnacna; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]",
        params: 440194,
        f1_median: 0.894,
        f1_std: 0.010,
    },
    ReferenceRow {
        index: 23,
        config: "8; cna; [4, 8, 16, 32, 64, 128, 256]; [2, 3, 4, 5, 4, 3, 2]",
        params: 525050,
        f1_median: 0.887,
        f1_std: 0.009,
    },
    ReferenceRow {
        index: 24,
        config: "32; cna; [4, 8, 16, 32, 64, 128, 256]; [2, 3, 4, 5, 4, 3, 2]",
        params: 525650,
        f1_median: 0.892,
        f1_std: 0.002,
    },
    ReferenceRow {
        index: 25,
        config: "8; cnacna; [4, 8, 16, 32, 64, 128, 256]; [2, 2, 2, 2, 2, 2, 2]",
        params: 965882,
        f1_median: 0.888,
        f1_std: 0.013,
    },
    ReferenceRow {
        index: 26,
        config: "32; cnacna; [4, 8, 16, 32, 64, 128, 256]; [2, 2, 2, 2, 2, 2, 2]",
        params: 966482,
        f1_median: 0.893,
        f1_std: 0.009,
    },
    ReferenceRow {
        index: 27,
        config: "8; cnacna; [4, 8, 16, 32, 64, 128, 256]; [2, 3, 4, 5, 4, 3, 2]",
        params: 1136794,
        f1_median: 0.887,
        f1_std: 0.007,
    },
    ReferenceRow {
        index: 28,
        config: "32; cnacna; [4, 8, 16, 32, 64, 128, 256]; [2, 3, 4, 5, 4, 3, 2]",
        params: 1137394,
        f1_median: 0.885,
        f1_std: 0.008,
    },
    ReferenceRow { index: 29, config: "ResNet18", params: 3843138, f1_median: 0.844, f1_std: 0.002 },
    ReferenceRow { index: 30, config: "ResNet34", params: 7217474, f1_median: 0.853, f1_std: 0.007 },
];

pub fn reference_row(index: usize) -> Option<&'static ReferenceRow> {
    REFERENCE_TABLE.iter().find(|r| r.index == index)
}

/// Grid file content: one configuration per line in table order.
pub fn grid_text() -> String {
    let mut s = String::from("# 28 configurations and 2 presets, in reference-table order\n");
    for r in &REFERENCE_TABLE {
        s.push_str(r.config);
        s.push('\n');
    }
    s
}
