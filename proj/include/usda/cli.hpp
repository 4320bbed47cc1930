// Command-line entry point.
//
//   usda gen-synthetic --out corpus.jsonl [--train 500 --valid 100 --test 100]
//   usda gen-pretrain  --data corpus.jsonl --out samples.jsonl [--tasks srs,did]
//   usda pretrain      --samples samples.jsonl --out pre.ckpt
//   usda train         --data corpus.jsonl --mode mtl --out model.ckpt [--init-from pre.ckpt]
//   usda eval          --checkpoint model.ckpt --split test [--traces traces.jsonl]
//   usda analyze       {clusters|impact|gates|per-class|turns} ...
//
// Exit codes: 0 success, 1 invalid input or runtime failure ("error: ..." on
// one line), 2 usage error.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usda::cli {

int dispatch(int argc, char** argv);

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usda::cli
