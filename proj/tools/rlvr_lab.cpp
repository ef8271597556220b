#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "rlvr/audit.hpp"
#include "rlvr/gradcheck.hpp"
#include "rlvr/metrics_io.hpp"
#include "rlvr/run_config.hpp"
#include "rlvr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool out_given = false;
};

void add_common_options(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--preset", a.preset,
                  "named preset: paper-dhpo paper-grpo paper-gspo paper-gmpo paper-cispo");
  cmd->add_option("--set", a.sets, "dotted-path override, key=value (repeatable)")
      ->take_all()
      ->expected(0, 1);
  cmd->add_option("--seed", a.seed, "override the training seed")
      ->each([&a](const std::string&) { a.seed_given = true; });
  cmd->add_option("--out", a.out_dir, "override the output directory")
      ->each([&a](const std::string&) { a.out_given = true; });
}

// layering: defaults <- preset <- config file <- --set <- --seed/--out
json layered_doc(const CommonArgs& a) {
  json doc = json::object();
  if (!a.preset.empty()) rlvr::merge_overlay(doc, rlvr::preset_json(a.preset));
  if (!a.config_path.empty()) {
    std::ifstream is(a.config_path);
    if (!is) throw rlvr::ConfigError({"cannot open config file " + a.config_path});
    json file = json::parse(is, nullptr, false);
    if (file.is_discarded())
      throw rlvr::ConfigError({"config file " + a.config_path + " is not valid JSON"});
    if (!file.is_object())
      throw rlvr::ConfigError({"config file " + a.config_path + " must hold a JSON object"});
    rlvr::merge_overlay(doc, file);
  }
  std::vector<std::string> errs;
  for (const auto& kv : a.sets) rlvr::apply_set_override(doc, kv, errs);
  if (!errs.empty()) throw rlvr::ConfigError(std::move(errs));
  if (a.seed_given) doc["seed"] = a.seed;
  if (a.out_given) doc["out_dir"] = a.out_dir;
  return doc;
}

rlvr::RunConfig resolve_and_echo(const json& doc) {
  rlvr::RunConfig rc = rlvr::parse_run_config(doc);
  std::cerr << rlvr::echo_config(rc).dump(2) << "\n";
  return rc;
}

// one training run writing its own log and checkpoint; returns the log path
std::string run_to_files(const rlvr::RunConfig& rc) {
  fs::create_directories(rc.out_dir);
  const std::string log_path = (fs::path(rc.out_dir) / (rc.run_id + ".jsonl")).string();
  const std::string ckpt_path = (fs::path(rc.out_dir) / (rc.run_id + ".ckpt")).string();
  rlvr::init_run_log(log_path, rlvr::echo_config(rc), rc.run_id);
  const bool with_k = rc.train.eval_avg_k > 0;
  rlvr::run_train(
      rc.train,
      [&](const rlvr::StepRecord& rec) { rlvr::append_record(log_path, rec, with_k); },
      ckpt_path);
  return log_path;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int cmd_train(const CommonArgs& args) {
  const auto rc = resolve_and_echo(layered_doc(args));
  const auto log_path = run_to_files(rc);
  std::cout << "run " << rc.run_id << ": " << rc.train.total_steps << " steps\n"
            << "log " << log_path << "\n"
            << "checkpoint " << (fs::path(rc.out_dir) / (rc.run_id + ".ckpt")).string() << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, int instances) {
  if (instances < 1) throw rlvr::ConfigError({"--instances: must be >= 1"});
  resolve_and_echo(layered_doc(args));
  rlvr::GradcheckOptions opt;
  opt.instances = instances;
  if (args.seed_given) opt.seed = args.seed;
  const auto report = rlvr::run_gradcheck(opt);
  std::cout << rlvr::gradcheck_report_json(report).dump(2) << "\n";
  return report.pass ? 0 : 3;
}

int cmd_compare(const CommonArgs& args, const std::string& objectives_text, int steps,
                const std::string& seeds_text) {
  const json base_doc = layered_doc(args);
  const auto base_rc = resolve_and_echo(base_doc);

  std::vector<std::string> objective_names;
  for (const auto& name : split_list(objectives_text)) {
    rlvr::ObjectiveKind kind;
    if (!rlvr::objective_from_string(name, kind))
      throw rlvr::ConfigError({"--objectives: unknown objective '" + name +
                               "' (GRPO, GSPO, DHPO_A, DHPO_E, GMPO, CISPO)"});
    if (std::find(objective_names.begin(), objective_names.end(), name) == objective_names.end())
      objective_names.push_back(name);
  }
  if (objective_names.empty()) throw rlvr::ConfigError({"--objectives: list is empty"});

  std::vector<std::uint64_t> seeds;
  if (seeds_text.empty()) {
    seeds.push_back(base_rc.train.seed);
  } else {
    for (const auto& s : split_list(seeds_text)) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
      if (end == s.c_str() || *end != '\0')
        throw rlvr::ConfigError({"--seeds: '" + s + "' is not an unsigned integer"});
      if (std::find(seeds.begin(), seeds.end(), v) == seeds.end()) seeds.push_back(v);
    }
  }

  // each pair keeps the shared settings but takes its objective's published
  // clip and mixing defaults and a fresh derived run id
  std::vector<rlvr::RunConfig> jobs;
  for (const auto& name : objective_names)
    for (const auto seed : seeds) {
      json d = base_doc;
      d["objective"] = name;
      d["seed"] = seed;
      d.erase("clip");
      d.erase("mixing");
      d.erase("run_id");
      if (steps > 0) d["total_steps"] = steps;
      jobs.push_back(rlvr::parse_run_config(d));
    }

  std::size_t threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* env = std::getenv("RLVR_LAB_THREADS")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) threads = static_cast<std::size_t>(v);
  }
  threads = std::min(threads, jobs.size());

  std::vector<std::string> log_paths(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::vector<int> failure_code(jobs.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
      try {
        log_paths[i] = run_to_files(jobs[i]);
      } catch (const rlvr::TrainerAbort& e) {
        failures[i] = e.what();
        failure_code[i] = 2;
      } catch (const std::exception& e) {
        failures[i] = e.what();
        failure_code[i] = 1;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int worst = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    if (failure_code[i] != 0) {
      std::cerr << "run " << jobs[i].run_id << " failed: " << failures[i] << "\n";
      worst = std::max(worst, failure_code[i]);
    }
  if (worst != 0) return worst;

  std::vector<rlvr::RunData> runs;
  runs.reserve(jobs.size());
  for (const auto& path : log_paths) runs.push_back(rlvr::read_run_log(path));
  rlvr::emit_plot_data(runs, base_rc.out_dir);

  for (std::size_t i = 0; i < jobs.size(); ++i)
    std::cout << "run " << jobs[i].run_id << ": " << log_paths[i] << "\n";
  for (const char* name : {"entropy.csv", "response_len.csv", "accuracy.csv", "clip_fractions.csv"})
    std::cout << "panel " << (fs::path(base_rc.out_dir) / name).string() << "\n";
  return 0;
}

int cmd_audit(const CommonArgs& args, const std::string& trace_path) {
  const auto rc = resolve_and_echo(layered_doc(args));
  const auto report = rlvr::run_audit(trace_path, rc);
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular RLVR laboratory: hybrid-ratio policy objectives on arithmetic tasks"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train = app.add_subcommand("train", "train one policy and write its run log");
  add_common_options(train, train_args);

  CommonArgs grad_args;
  int instances = 100;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
  add_common_options(gradcheck, grad_args);
  gradcheck->add_option("--instances", instances, "random instances per objective");

  CommonArgs cmp_args;
  std::string objectives_text = "GRPO,GSPO,DHPO_A,DHPO_E,GMPO,CISPO";
  std::string seeds_text;
  int steps = 0;
  auto* compare = app.add_subcommand("compare", "train several objectives on a shared config");
  add_common_options(compare, cmp_args);
  compare->add_option("--objectives", objectives_text, "comma-separated objective list");
  compare->add_option("--steps", steps, "override total_steps for every run");
  compare->add_option("--seeds", seeds_text, "comma-separated seed list");

  CommonArgs audit_args;
  std::string trace_path;
  auto* audit = app.add_subcommand("audit", "score a rollout trace under every objective");
  audit->add_option("trace", trace_path, "rollout trace (JSONL)")->required();
  add_common_options(audit, audit_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (gradcheck->parsed()) return cmd_gradcheck(grad_args, instances);
    if (compare->parsed()) return cmd_compare(cmp_args, objectives_text, steps, seeds_text);
    if (audit->parsed()) return cmd_audit(audit_args, trace_path);
  } catch (const rlvr::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const rlvr::TrainerAbort& e) {
    std::cerr << "trainer abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
