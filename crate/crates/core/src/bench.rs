//! placeholder, filled in next
