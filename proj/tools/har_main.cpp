// Command-line front end. Everything goes through the C API, which maps
// library errors onto the stable exit codes: 0 ok, 2 config/usage, 3 io,
// 4 numeric.
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "har/c_api.h"

namespace {

int to_exit(har_status st) {
  switch (st) {
    case HAR_OK:
      return 0;
    case HAR_ERR_IO:
      return 3;
    case HAR_ERR_NUMERIC:
      return 4;
    default:
      return 2;  // config, usage and contract violations
  }
}

struct ConfigDeleter {
  void operator()(har_config* c) const { har_config_free(c); }
};
using ConfigPtr = std::unique_ptr<har_config, ConfigDeleter>;

struct StringOut {
  char* s = nullptr;
  ~StringOut() { har_string_free(s); }
};

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config file")
      ->required();
  sub->add_option("--out", c.out, "output directory (overrides the config)");
  c.seed_opt =
      sub->add_option("--seed", c.seed, "global seed (overrides the config)");
  sub->fallthrough();
}

int fail(har_status st) {
  std::fprintf(stderr, "error: %s\n", har_last_error());
  return to_exit(st);
}

ConfigPtr open_config(const Common& c, int& rc) {
  har_config* raw = nullptr;
  har_status st = har_config_load(c.config.c_str(), &raw);
  if (st != HAR_OK) {
    rc = fail(st);
    return nullptr;
  }
  ConfigPtr cfg(raw);
  if (!c.out.empty()) {
    st = har_config_set_output_dir(cfg.get(), c.out.c_str());
    if (st != HAR_OK) {
      rc = fail(st);
      return nullptr;
    }
  }
  if (c.seed_opt && c.seed_opt->count() > 0) {
    st = har_config_set_seed(cfg.get(), c.seed);
    if (st != HAR_OK) {
      rc = fail(st);
      return nullptr;
    }
  }
  return cfg;
}

int finish(har_status st, const StringOut& text, bool quiet) {
  if (st != HAR_OK) return fail(st);
  if (!quiet && text.s) std::fputs(text.s, stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WiFi-CSI activity recognition workbench"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "suppress normal output");

  Common c_synth, c_prep, c_train, c_eval, c_bench;
  std::string inspect_dir, checkpoint, split = "val", precision = "f64";
  std::string compare_a, compare_b;
  std::size_t reps = 50;

  CLI::App* s_synth =
      app.add_subcommand("synth", "generate the configured synthetic dataset");
  add_common(s_synth, c_synth);

  CLI::App* s_inspect =
      app.add_subcommand("inspect", "summarize a dataset directory");
  s_inspect->add_option("dir", inspect_dir, "dataset directory")->required();
  s_inspect->fallthrough();

  CLI::App* s_prep = app.add_subcommand(
      "preprocess", "materialize the preprocessing pipeline's output");
  add_common(s_prep, c_prep);

  CLI::App* s_train =
      app.add_subcommand("train", "train the configured model");
  add_common(s_train, c_train);

  CLI::App* s_eval =
      app.add_subcommand("eval", "evaluate a checkpoint on one split");
  add_common(s_eval, c_eval);
  s_eval->add_option("--checkpoint", checkpoint,
                     "checkpoint directory (default <out>/checkpoint)");
  s_eval->add_option("--split", split, "dataset split (default val)");

  CLI::App* s_bench =
      app.add_subcommand("bench", "measure single-sample inference");
  add_common(s_bench, c_bench);
  s_bench->add_option("--reps", reps, "timed repetitions (default 50)");
  s_bench
      ->add_option("--precision", precision, "engine precision (default f64)")
      ->check(CLI::IsMember({"f32", "f64"}));

  CLI::App* s_compare =
      app.add_subcommand("compare", "diff two exported metrics files");
  s_compare->add_option("a", compare_a, "metrics json A")->required();
  s_compare->add_option("b", compare_b, "metrics json B")->required();
  s_compare->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  int rc = 0;
  StringOut text;

  if (app.got_subcommand(s_synth)) {
    ConfigPtr cfg = open_config(c_synth, rc);
    if (!cfg) return rc;
    return finish(har_cmd_synth(cfg.get(), &text.s), text, quiet);
  }
  if (app.got_subcommand(s_inspect)) {
    return finish(har_cmd_inspect(inspect_dir.c_str(), &text.s), text, quiet);
  }
  if (app.got_subcommand(s_prep)) {
    ConfigPtr cfg = open_config(c_prep, rc);
    if (!cfg) return rc;
    return finish(har_cmd_preprocess(cfg.get(), &text.s), text, quiet);
  }
  if (app.got_subcommand(s_train)) {
    ConfigPtr cfg = open_config(c_train, rc);
    if (!cfg) return rc;
    return finish(har_cmd_train(cfg.get(), &text.s), text, quiet);
  }
  if (app.got_subcommand(s_eval)) {
    ConfigPtr cfg = open_config(c_eval, rc);
    if (!cfg) return rc;
    return finish(har_cmd_eval(cfg.get(),
                               checkpoint.empty() ? nullptr : checkpoint.c_str(),
                               split.c_str(), &text.s),
                  text, quiet);
  }
  if (app.got_subcommand(s_bench)) {
    ConfigPtr cfg = open_config(c_bench, rc);
    if (!cfg) return rc;
    return finish(
        har_cmd_bench(cfg.get(), reps, precision == "f32" ? 1 : 0, &text.s),
        text, quiet);
  }
  if (app.got_subcommand(s_compare)) {
    return finish(har_cmd_compare(compare_a.c_str(), compare_b.c_str(),
                                  &text.s),
                  text, quiet);
  }
  return 2;
}
