//! The user guide, mounted as documentation modules.
//!
//! Each chapter of the mdbook under `book/` is included here so that
//! `cargo test` compiles and runs every code block in the guide. If a
//! snippet drifts from the library API, the build breaks.

macro_rules! chapter {
    ($name:ident, $path:literal) => {
        #[doc = include_str!($path)]
        pub mod $name {}
    };
}

chapter!(introduction, "../../../book/src/introduction.md");
chapter!(laws, "../../../book/src/laws.md");
chapter!(sampling, "../../../book/src/sampling.md");
chapter!(estimation, "../../../book/src/estimation.md");
chapter!(tail_statistics, "../../../book/src/tail-statistics.md");
chapter!(criteria, "../../../book/src/criteria.md");
chapter!(experiments, "../../../book/src/experiments.md");
