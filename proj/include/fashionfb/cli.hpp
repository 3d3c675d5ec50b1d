#pragma once

namespace fashionfb {

// Entry point behind the fashionfb binary, callable in-process for tests.
// Subcommands: gen-data, build-vocab, train, train-lm, decode, evaluate,
// sweep, filter-check. Every knob is a long option on the root command and
// doubles as a key in the --config file (same name); precedence is flags
// over file over defaults, and unknown config keys are rejected.
// --print-config emits the fully resolved configuration and exits.
//
// All randomness derives from the single --seed, fanned out per subsystem
// with fixed stream ids, so one number reproduces any run.
int run_cli(int argc, const char* const* argv);

}  // namespace fashionfb
