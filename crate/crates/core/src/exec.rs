//! Choice between the data-parallel and sequential code paths.

/// Execution strategy for enumeration-heavy operations.
///
/// Both strategies produce identical results, in identical order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}
