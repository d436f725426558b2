//! Application-layer inspection for the two protocols the ALG understands.

pub mod ftp;
pub mod http;

pub use ftp::{
    check_command_pattern, filter_command, inspect_ftp, scan_data, FtpAction, FtpDirection,
    FtpInspection, FtpScanReport, FtpVerdict,
};
pub use http::{
    check_author, filter_url, inspect_http, normalize, route_by_content, Admission,
    HttpInspection, HttpOutcome, Normalized, NormalizedRequest, Reject, RouteDecision, UrlCheck,
    MAX_PIPELINED,
};
