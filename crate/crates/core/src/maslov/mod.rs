mod bundle;
mod corners;
mod ledger;
mod scan;
mod shayman;

pub use bundle::*;
pub use corners::*;
pub use ledger::*;
pub use scan::*;
pub use shayman::*;
