// Copyright 2026 The mared Authors
// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mared_cli::run(std::env::args_os()))
}
