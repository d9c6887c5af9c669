//! Completion service: a pull-based task queue, its wire protocol, a TCP
//! server, worker clients and a batch evaluator on top.

pub mod protocol;
pub mod queue;
pub mod remote;
pub mod server;
pub mod worker;

pub use protocol::{Message, PROTOCOL_VERSION};
pub use queue::{Clock, ManualClock, QueueConfig, QueueSnapshot, ReturnOutcome, SubmitError, SystemClock, TaskQueue};
pub use remote::RemoteEvaluator;
pub use server::{Hub, InProcessTransport, Server, ServerOptions, Session, TcpTransport, Transport};
pub use worker::Worker;
