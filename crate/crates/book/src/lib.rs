//! Compiles and runs the Rust listings of the guide in `book/` as
//! doc-tests, so the book cannot drift from the library.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(forests, "forests.md");
chapter!(isolation, "isolation.md");
chapter!(netflow, "netflow.md");
chapter!(weblog, "weblog.md");
chapter!(malware, "malware.md");
chapter!(seqnet, "seqnet.md");
chapter!(evaluation, "evaluation.md");
chapter!(operations, "operations.md");
