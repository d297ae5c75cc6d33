#pragma once

#include <filesystem>
#include <ostream>

#include "mmtod/corpus.hpp"

namespace mmtod {

// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3 };

// Entry point of the `mmtod` tool: synth, train, eval and generate.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Loads a JSONL corpus whose domain is taken from its first record.
Corpus load_corpus_any(const std::filesystem::path& path);

}  // namespace mmtod
