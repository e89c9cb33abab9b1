pub mod bridge;
pub mod campaign;
pub mod config;
pub mod coverage;
pub mod llm;
pub mod opsel;
pub mod oracle;
pub mod types;

// The guide's code blocks run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operator-selection.md")]
    mod operator_selection {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/loop.md")]
    mod campaign_loop {}
    #[doc = include_str!("../../../book/src/persistence.md")]
    mod persistence {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
