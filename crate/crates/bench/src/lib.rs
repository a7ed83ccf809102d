pub use jumpsense_core;
