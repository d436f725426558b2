//! FTP inspection: command blocklist, malicious-pattern checks on command
//! arguments, and scanning of in-band transfer data.

use serde::Serialize;

use crate::packet::{FtpCommand, FtpMessage, FtpReply};
use crate::policy::{FtpScan, PolicySet, ScanOutcome, ScanRule};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FtpVerdict {
    Allow,
    Blocked(String),
    /// Names the pattern that matched, or that ran out of budget.
    Malicious(String),
    ScanSkipped,
}

/// Depends on the verb alone.
pub fn filter_command(policy: &PolicySet, cmd: &FtpCommand) -> FtpVerdict {
    if policy.ftp_blocked_verbs.contains(&cmd.verb) {
        FtpVerdict::Blocked(cmd.verb.clone())
    } else {
        FtpVerdict::Allow
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpScanReport {
    pub verdict: FtpVerdict,
    pub steps: u64,
}

fn run_rule(rule: &ScanRule, input: &[u8]) -> FtpScanReport {
    let scan = rule.scan(input);
    let verdict = match scan.outcome {
        ScanOutcome::Clean => FtpVerdict::Allow,
        // fail closed: an exhausted budget is treated as a hit
        ScanOutcome::Matched | ScanOutcome::BudgetExceeded => {
            FtpVerdict::Malicious(rule.pattern.source().to_string())
        }
    };
    FtpScanReport {
        verdict,
        steps: scan.steps,
    }
}

pub fn scan_data(policy: &PolicySet, data: &[u8]) -> FtpScanReport {
    match &policy.ftp_scan {
        FtpScan::Off => FtpScanReport {
            verdict: FtpVerdict::ScanSkipped,
            steps: 0,
        },
        FtpScan::On(rule) => run_rule(rule, data),
    }
}

/// Runs the configured argument pattern, if any, over the command argument.
pub fn check_command_pattern(policy: &PolicySet, cmd: &FtpCommand) -> FtpScanReport {
    match &policy.ftp_command_pattern {
        None => FtpScanReport {
            verdict: FtpVerdict::Allow,
            steps: 0,
        },
        Some(rule) => run_rule(rule, cmd.argument.as_bytes()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtpDirection {
    ToServer,
    ToClient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FtpAction {
    Forward,
    /// Answer the client in place of the server.
    Reply(FtpReply),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpInspection {
    pub action: FtpAction,
    pub verdicts: Vec<FtpVerdict>,
    pub steps: u64,
}

/// Client-bound payloads are replies; only their download data is scanned.
/// Server-bound payloads go through, in order: command parsing, the argument
/// pattern, the verb blocklist, and the data scan for upload verbs.
pub fn inspect_ftp(policy: &PolicySet, payload: &[u8], direction: FtpDirection) -> FtpInspection {
    let mut out = FtpInspection {
        action: FtpAction::Forward,
        verdicts: Vec::new(),
        steps: 0,
    };
    if direction == FtpDirection::ToClient {
        if let Some(reply) = FtpReply::decode(payload).filter(|r| !r.data.is_empty()) {
            let scan = scan_data(policy, &reply.data);
            out.steps += scan.steps;
            if matches!(scan.verdict, FtpVerdict::Malicious(_)) {
                out.action = FtpAction::Reply(FtpReply::new(451, "transfer aborted by gateway"));
            }
            out.verdicts.push(scan.verdict);
        }
        return out;
    }

    let msg = FtpMessage::decode(payload);
    let cmd = match msg.command() {
        Ok(c) => c,
        Err(_) => {
            out.action = FtpAction::Reply(FtpReply::new(500, "syntax error"));
            return out;
        }
    };
    let pattern = check_command_pattern(policy, &cmd);
    out.steps += pattern.steps;
    let rejected = matches!(pattern.verdict, FtpVerdict::Malicious(_));
    out.verdicts.push(pattern.verdict);
    if rejected {
        out.action = FtpAction::Reply(FtpReply::new(550, "rejected by content filter"));
        return out;
    }
    let filter = filter_command(policy, &cmd);
    let blocked = matches!(filter, FtpVerdict::Blocked(_));
    out.verdicts.push(filter);
    if blocked {
        out.action = FtpAction::Reply(FtpReply::new(550, "command not allowed"));
        return out;
    }
    if cmd.is_upload() {
        let scan = scan_data(policy, &msg.data);
        out.steps += scan.steps;
        if matches!(scan.verdict, FtpVerdict::Malicious(_)) {
            out.action = FtpAction::Reply(FtpReply::new(550, "malicious content"));
        }
        out.verdicts.push(scan.verdict);
    }
    out
}
