#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fashionfb/cli.hpp"

using namespace fashionfb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

// Runs the CLI in-process with captured streams, the way a shell would see it.
CliResult cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("fashionfb");
  for (const auto& a : args) argv.push_back(a.c_str());

  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("ffcli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

// Small corpus plus vocab shared by the pipeline-level cases.
struct Workspace {
  fs::path dir;
  std::string data;
  std::string vocab;

  explicit Workspace(const std::string& name, const std::string& type = "good") {
    dir = fresh_dir(name);
    data = (dir / "data").string();
    vocab = (dir / "vocab.json").string();
    REQUIRE(cli({"gen-data", "--out", data, "--train-images", "10", "--eval-images", "3",
                 "--refs-per-eval-image", "4", "--feedback-type", type, "--seed", "5"})
                .code == 0);
    REQUIRE(cli({"build-vocab", "--corpus", data + "/train.jsonl", "--out", vocab,
                 "--min-count", "0"})
                .code == 0);
  }

  std::string train() const { return data + "/train.jsonl"; }
  std::string eval() const { return data + "/eval.jsonl"; }
  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }
};

const std::vector<std::string> kTinyTrain = {
    "--embed", "12", "--hidden", "12", "--attn", "12", "--feat", "12",
    "--epochs", "2",  "--freeze-epochs", "1", "--eval-every", "2",
    "--eval-beam", "2", "--batch-images", "4", "--seed", "5"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("config precedence is flags over file over defaults") {
  fs::path dir = fresh_dir("precedence");
  spit(dir / "run.cfg", "seed=9\ntrain-images=41\n# a comment line\n\nfilter=false\n");

  auto defaults = parse_key_values(cli({"--print-config"}).out);
  CHECK(defaults.at("seed") == "1");
  CHECK(defaults.at("train-images") == "2000");
  CHECK(defaults.at("filter") == "true");

  auto from_file = parse_key_values(cli({"--config", (dir / "run.cfg").string(),
                                         "--print-config"}).out);
  CHECK(from_file.at("seed") == "9");
  CHECK(from_file.at("train-images") == "41");
  CHECK(from_file.at("filter") == "false");
  CHECK(from_file.at("eval-images") == "100");

  auto with_flags = parse_key_values(cli({"--config", (dir / "run.cfg").string(), "--seed", "12",
                                          "--filter", "--print-config"}).out);
  CHECK(with_flags.at("seed") == "12");
  CHECK(with_flags.at("train-images") == "41");
  CHECK(with_flags.at("filter") == "true");
}

TEST_CASE("print-config exits zero and resolves the beta cutoff by type") {
  CliResult good = cli({"--print-config"});
  CHECK(good.code == 0);
  CHECK(parse_key_values(good.out).at("beta-zero-after-step") == "11");

  CliResult tip = cli({"--feedback-type", "tip", "--print-config"});
  CHECK(tip.code == 0);
  CHECK(parse_key_values(tip.out).at("beta-zero-after-step") == "16");

  CliResult pinned = cli({"--beta-zero-after-step", "7", "--print-config"});
  CHECK(parse_key_values(pinned.out).at("beta-zero-after-step") == "7");
}

TEST_CASE("malformed invocations fail with named errors") {
  fs::path dir = fresh_dir("badconfig");

  spit(dir / "bad.cfg", "not-a-real-knob=3\n");
  CliResult unknown = cli({"--config", (dir / "bad.cfg").string(), "--print-config"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("not-a-real-knob") != std::string::npos);

  spit(dir / "noval.cfg", "seed nine\n");
  CliResult noval = cli({"--config", (dir / "noval.cfg").string(), "--print-config"});
  CHECK(noval.code == 1);
  CHECK(noval.err.find("key=value") != std::string::npos);

  spit(dir / "badval.cfg", "epochs=soon\n");
  CliResult badval = cli({"--config", (dir / "badval.cfg").string(), "--print-config"});
  CHECK(badval.code == 1);
  CHECK(badval.err.find("epochs") != std::string::npos);

  CliResult nosub = cli({"--seed", "4"});
  CHECK(nosub.code == 1);
  CHECK(nosub.err.find("subcommand") != std::string::npos);

  CliResult nopath = cli({"train", "--eval-corpus", "x", "--vocab", "y", "--out", "z"});
  CHECK(nopath.code == 1);
  CHECK(nopath.err.find("--corpus") != std::string::npos);

  CliResult badthreads = cli({"--threads", "0", "gen-data", "--out", (dir / "d").string()});
  CHECK(badthreads.code == 1);
  CHECK(badthreads.err.find("threads") != std::string::npos);

  CliResult missing = cli({"build-vocab", "--corpus", (dir / "absent.jsonl").string(), "--out",
                           (dir / "v.json").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("absent.jsonl") != std::string::npos);
}

TEST_CASE("gen-data twice under one seed writes identical bytes") {
  fs::path dir = fresh_dir("gendet");
  std::vector<std::string> args = {"gen-data", "--train-images", "8",  "--eval-images", "2",
                                   "--refs-per-eval-image", "3", "--seed", "7", "--out", ""};
  args.back() = (dir / "a").string();
  REQUIRE(cli(args).code == 0);
  args.back() = (dir / "b").string();
  REQUIRE(cli(args).code == 0);

  for (const char* leaf : {"train.jsonl", "train.fgrd", "eval.jsonl", "eval.fgrd"})
    CHECK(slurp(dir / "a" / leaf) == slurp(dir / "b" / leaf));

  args.back() = (dir / "c").string();
  args[8] = "8";
  REQUIRE(cli(args).code == 0);
  CHECK(slurp(dir / "a" / "train.jsonl") != slurp(dir / "c" / "train.jsonl"));
}

TEST_CASE("the pipeline runs end to end and every artifact parses") {
  Workspace ws("pipeline");

  CliResult train = cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(),
                             "--vocab", ws.vocab, "--out", ws.path("td.ckpt"), "--epoch-log",
                             ws.path("epochs.csv")},
                            kTinyTrain));
  REQUIRE(train.code == 0);
  CHECK(train.out.find("best epoch") != std::string::npos);

  std::string csv = slurp(ws.path("epochs.csv"));
  CHECK(csv.rfind("epoch,train_loss,eval_cider_d,wall_seconds", 0) == 0);

  REQUIRE(cli(cat({"train-lm", "--corpus", ws.train(), "--vocab", ws.vocab, "--out",
                   ws.path("lm.ckpt")},
                  kTinyTrain))
              .code == 0);

  CliResult dec = cli({"decode", "--eval-corpus", ws.eval(), "--vocab", ws.vocab,
                       "--checkpoint", ws.path("td.ckpt"), "--lm-checkpoint", ws.path("lm.ckpt"),
                       "--beam", "3", "--beta", "0.4", "--out", ws.path("dec.jsonl")});
  REQUIRE(dec.code == 0);
  auto rows = read_jsonl(ws.path("dec.jsonl"));
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.at("beam_width").get<int>() == 3);
    CHECK(row.at("beta").get<double>() == doctest::Approx(0.4));
    CHECK(row.at("image_id").get<std::string>().rfind("eval_", 0) == 0);
    CHECK(row.at("score").is_number());
    CHECK(row.at("logp_cond").is_number());
    CHECK(row.at("logp_prior").is_number());
    CHECK(row.at("filtered_fallback").is_boolean());
  }

  CliResult ev = cli({"evaluate", "--candidates", ws.path("dec.jsonl"), "--eval-corpus",
                      ws.eval(), "--vocab", ws.vocab, "--fs", "--seed", "5", "--out",
                      ws.path("report.json")});
  REQUIRE(ev.code == 0);
  json report = json::parse(slurp(ws.path("report.json")));
  for (const char* key : {"bleu4", "rouge_l", "cider_d", "diversity", "vocab_usage"}) {
    CHECK(report.at(key).is_number());
    CHECK(report.at("fs_baseline").at(key).is_number());
  }
  CHECK(report.at("fs_baseline").at("diversity").get<double>() > 0.0);

  CliResult sw = cli({"sweep", "--eval-corpus", ws.eval(), "--vocab", ws.vocab, "--checkpoint",
                      ws.path("td.ckpt"), "--lm-checkpoint", ws.path("lm.ckpt"), "--betas",
                      "0,0.4", "--beams", "2", "--out", ws.path("sweep.csv")});
  REQUIRE(sw.code == 0);
  std::istringstream sweep(slurp(ws.path("sweep.csv")));
  std::string line;
  std::getline(sweep, line);
  CHECK(line == "beta,beam,bleu4,rouge_l,cider_d,diversity,vocab_usage,filtered_fallback_rate");
  int data_rows = 0;
  while (std::getline(sweep, line))
    if (!line.empty()) ++data_rows;
  CHECK(data_rows == 2);
}

TEST_CASE("decode with beta zero ignores the prior model") {
  Workspace ws("betazero");
  REQUIRE(cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(), "--vocab",
                   ws.vocab, "--out", ws.path("td.ckpt")},
                  kTinyTrain))
              .code == 0);
  REQUIRE(cli(cat({"train-lm", "--corpus", ws.train(), "--vocab", ws.vocab, "--out",
                   ws.path("lm.ckpt")},
                  kTinyTrain))
              .code == 0);

  std::vector<std::string> base = {"decode", "--eval-corpus", ws.eval(), "--vocab", ws.vocab,
                                   "--checkpoint", ws.path("td.ckpt"), "--beam", "3",
                                   "--beta", "0"};
  REQUIRE(cli(cat(base, {"--out", ws.path("plain.jsonl")})).code == 0);
  REQUIRE(cli(cat(base, {"--lm-checkpoint", ws.path("lm.ckpt"), "--out", ws.path("mmi.jsonl")}))
              .code == 0);

  auto plain = read_jsonl(ws.path("plain.jsonl"));
  auto mmi = read_jsonl(ws.path("mmi.jsonl"));
  REQUIRE(plain.size() == mmi.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(plain[i].at("image_id") == mmi[i].at("image_id"));
    CHECK(plain[i].at("sentence") == mmi[i].at("sentence"));
    CHECK(plain[i].at("score") == mmi[i].at("score"));
    CHECK(plain[i].at("logp_prior").get<double>() == 0.0);
  }

  SUBCASE("rerunning decode overwrites the output identically") {
    std::string before = slurp(ws.path("plain.jsonl"));
    REQUIRE(cli(cat(base, {"--out", ws.path("plain.jsonl")})).code == 0);
    CHECK(slurp(ws.path("plain.jsonl")) == before);
  }

  SUBCASE("evaluate validates candidate coverage") {
    auto rows = read_jsonl(ws.path("plain.jsonl"));
    std::ostringstream partial;
    for (std::size_t i = 1; i < rows.size(); ++i) partial << rows[i].dump() << "\n";
    spit(ws.path("partial.jsonl"), partial.str());
    CliResult ev = cli({"evaluate", "--candidates", ws.path("partial.jsonl"), "--eval-corpus",
                        ws.eval(), "--vocab", ws.vocab});
    CHECK(ev.code == 1);
    CHECK(ev.err.find(rows[0].at("image_id").get<std::string>()) != std::string::npos);
  }
}

TEST_CASE("decode picks the beta cutoff from the corpus feedback type") {
  Workspace ws("tipcorpus", "tip");
  REQUIRE(cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(), "--vocab",
                   ws.vocab, "--out", ws.path("td.ckpt")},
                  kTinyTrain))
              .code == 0);
  CliResult dec = cli({"decode", "--eval-corpus", ws.eval(), "--vocab", ws.vocab,
                       "--checkpoint", ws.path("td.ckpt"), "--beam", "2", "--beta", "0",
                       "--out", ws.path("dec.jsonl")});
  CHECK(dec.code == 0);
  CHECK(read_jsonl(ws.path("dec.jsonl")).size() == 3);
}

TEST_CASE("checkpoints refuse a mismatched vocabulary") {
  Workspace ws("vocabmismatch");
  REQUIRE(cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(), "--vocab",
                   ws.vocab, "--out", ws.path("td.ckpt")},
                  kTinyTrain))
              .code == 0);
  REQUIRE(cli({"build-vocab", "--corpus", ws.train(), "--out", ws.path("small_vocab.json"),
               "--min-count", "4"})
              .code == 0);
  CliResult dec = cli({"decode", "--eval-corpus", ws.eval(), "--vocab",
                       ws.path("small_vocab.json"), "--checkpoint", ws.path("td.ckpt"),
                       "--beta", "0", "--out", ws.path("dec.jsonl")});
  CHECK(dec.code == 1);
  CHECK(dec.err.find("vocabulary") != std::string::npos);
}

TEST_CASE("filter-check writes one verdict row per sentence") {
  fs::path dir = fresh_dir("filtercheck");
  spit(dir / "sents.txt",
       "Swap your black jeans for a white jacket.\n"
       "\n"
       "swap your black jeans for black jeans\n");
  CliResult r = cli({"filter-check", "--input", (dir / "sents.txt").string(), "--feedback-type",
                     "tip", "--out", (dir / "verdicts.tsv").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "verdicts.tsv") ==
        "swap your black jeans for a white jacket\tTIP\tvalid\tnone\n"
        "swap your black jeans for black jeans\tTIP\tinvalid\tfull-NP-repeat\n");

  CliResult good = cli({"filter-check", "--input", (dir / "sents.txt").string(),
                        "--feedback-type", "good"});
  REQUIRE(good.code == 0);
  CHECK(good.out.find("\tGOOD\t") != std::string::npos);
}

TEST_CASE("the fc baseline trains and decodes through the cli") {
  Workspace ws("fcmodel");
  REQUIRE(cli(cat({"train", "--model", "fc", "--corpus", ws.train(), "--eval-corpus", ws.eval(),
                   "--vocab", ws.vocab, "--out", ws.path("fc.ckpt")},
                  kTinyTrain))
              .code == 0);
  CliResult dec = cli({"decode", "--eval-corpus", ws.eval(), "--vocab", ws.vocab,
                       "--checkpoint", ws.path("fc.ckpt"), "--beam", "2", "--beta", "0",
                       "--out", ws.path("dec.jsonl")});
  CHECK(dec.code == 0);
  CHECK(read_jsonl(ws.path("dec.jsonl")).size() == 3);

  CliResult transfer = cli(cat({"train", "--model", "fc", "--corpus", ws.train(),
                                "--eval-corpus", ws.eval(), "--vocab", ws.vocab, "--out",
                                ws.path("fc2.ckpt"), "--transfer-encoder-from",
                                ws.path("fc.ckpt")},
                               kTinyTrain));
  CHECK(transfer.code == 1);
  CHECK(transfer.err.find("attention") != std::string::npos);
}

TEST_CASE("encoder transfer accepts an attention checkpoint through the cli") {
  Workspace ws("transfer");
  REQUIRE(cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(), "--vocab",
                   ws.vocab, "--out", ws.path("good.ckpt")},
                  kTinyTrain))
              .code == 0);
  CliResult r = cli(cat({"train", "--corpus", ws.train(), "--eval-corpus", ws.eval(), "--vocab",
                         ws.vocab, "--out", ws.path("warm.ckpt"), "--transfer-encoder-from",
                         ws.path("good.ckpt")},
                        kTinyTrain));
  CHECK(r.code == 0);
  CHECK(fs::exists(ws.path("warm.ckpt")));
}
