#pragma once

// Run logging (JSONL with a config header line), run comparison tables, and
// plot-panel CSV emission. Numeric text always comes from the JSON dumper so
// CSV values match the log bytes exactly.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/core_types.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr {

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "mean_reward",     "mean_entropy",   "mean_response_len",
      "greedy_accuracy", "loss",           "clip_token_frac",
      "clip_seq_frac",   "min_clipped_frac", "wall_ms"};
  return names;
}

inline nlohmann::ordered_json step_record_json(const StepRecord& rec, bool with_avg_k = false) {
  nlohmann::ordered_json j;
  j["step"] = rec.step;
  j["mean_reward"] = rec.mean_reward;
  j["mean_entropy"] = rec.mean_entropy;
  j["mean_response_len"] = rec.mean_response_len;
  j["greedy_accuracy"] = rec.greedy_accuracy;
  j["loss"] = rec.loss;
  j["clip_token_frac"] = rec.clip_stats.token_frac;
  j["clip_seq_frac"] = rec.clip_stats.seq_frac;
  j["min_clipped_frac"] = rec.clip_stats.min_clipped_frac;
  j["wall_ms"] = rec.wall_ms;
  if (with_avg_k) j["avg_at_k"] = rec.avg_at_k;
  return j;
}

inline void init_run_log(const std::string& path, const nlohmann::ordered_json& config_echo,
                         const std::string& run_id) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("init_run_log: cannot open " + path);
  nlohmann::ordered_json header;
  header["config"] = config_echo;
  header["run_id"] = run_id;
  header["artifact_version"] = kArtifactVersion;
  os << header.dump() << "\n";
  os.flush();
  if (!os) throw std::runtime_error("init_run_log: write failed for " + path);
}

inline void append_record(const std::string& path, const StepRecord& rec, bool with_avg_k = false) {
  for (const auto& [name, value] :
       std::initializer_list<std::pair<const char*, double>>{
           {"mean_reward", rec.mean_reward},
           {"mean_entropy", rec.mean_entropy},
           {"mean_response_len", rec.mean_response_len},
           {"greedy_accuracy", rec.greedy_accuracy},
           {"loss", rec.loss},
           {"clip_token_frac", rec.clip_stats.token_frac},
           {"clip_seq_frac", rec.clip_stats.seq_frac},
           {"min_clipped_frac", rec.clip_stats.min_clipped_frac}})
    if (!std::isfinite(value))
      throw std::invalid_argument(std::string("append_record: non-finite field ") + name);
  if (!std::filesystem::exists(path))
    throw std::runtime_error("append_record: log " + path + " is missing its config header");
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("append_record: cannot open " + path);
  os << step_record_json(rec, with_avg_k).dump() << "\n";
  os.flush();
  if (!os) throw std::runtime_error("append_record: write failed for " + path);
}

struct RunData {
  std::string path;
  std::string run_id;
  nlohmann::ordered_json config;
  std::vector<nlohmann::ordered_json> records;
};

inline RunData read_run_log(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_run_log: cannot open " + path);
  RunData run;
  run.path = path;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_run_log: empty log " + path);
  const auto header = nlohmann::ordered_json::parse(line);
  if (!header.contains("config") || !header.contains("run_id"))
    throw std::runtime_error("read_run_log: first line of " + path + " is not a config header");
  run.config = header.at("config");
  run.run_id = header.at("run_id").get<std::string>();
  long long prev_step = -1;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto rec = nlohmann::ordered_json::parse(line);
    const long long step = rec.at("step").get<long long>();
    if (step <= prev_step)
      throw std::runtime_error("read_run_log: steps not strictly increasing at line " +
                               std::to_string(line_no) + " of " + path);
    prev_step = step;
    run.records.push_back(std::move(rec));
  }
  return run;
}

inline bool valid_metric(const std::string& metric) {
  for (const auto& name : metric_names())
    if (name == metric) return true;
  return false;
}

inline std::string metric_error(const std::string& metric) {
  std::string msg = "unknown metric '" + metric + "'; valid metrics:";
  for (const auto& name : metric_names()) msg += " " + name;
  return msg;
}

// step-by-run table; missing steps leave the cell empty
inline std::string compare_runs_csv(const std::vector<RunData>& runs, const std::string& metric) {
  if (runs.empty()) throw std::invalid_argument("compare_runs: need at least one run");
  if (!valid_metric(metric)) throw std::invalid_argument(metric_error(metric));
  std::set<long long> steps;
  std::vector<std::map<long long, std::string>> columns(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (const auto& rec : runs[i].records) {
      const long long step = rec.at("step").get<long long>();
      steps.insert(step);
      columns[i][step] = rec.at(metric).dump();
    }
  std::string csv = "step";
  for (const auto& run : runs) csv += "," + run.run_id;
  csv += "\n";
  for (long long step : steps) {
    csv += std::to_string(step);
    for (const auto& col : columns) {
      csv += ",";
      const auto it = col.find(step);
      if (it != col.end()) csv += it->second;
    }
    csv += "\n";
  }
  return csv;
}

// multi-metric variant used for the clip-fraction panel
inline std::string compare_runs_csv_multi(const std::vector<RunData>& runs,
                                          const std::vector<std::string>& metrics) {
  if (runs.empty()) throw std::invalid_argument("compare_runs: need at least one run");
  for (const auto& m : metrics)
    if (!valid_metric(m)) throw std::invalid_argument(metric_error(m));
  std::set<long long> steps;
  std::vector<std::map<long long, std::vector<std::string>>> columns(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (const auto& rec : runs[i].records) {
      const long long step = rec.at("step").get<long long>();
      steps.insert(step);
      auto& cell = columns[i][step];
      for (const auto& m : metrics) cell.push_back(rec.at(m).dump());
    }
  std::string csv = "step";
  for (const auto& run : runs)
    for (const auto& m : metrics) csv += "," + run.run_id + ":" + m;
  csv += "\n";
  for (long long step : steps) {
    csv += std::to_string(step);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto it = columns[i].find(step);
      for (std::size_t j = 0; j < metrics.size(); ++j) {
        csv += ",";
        if (it != columns[i].end()) csv += it->second[j];
      }
    }
    csv += "\n";
  }
  return csv;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_text_file: cannot open " + path);
  os << text;
  if (!os) throw std::runtime_error("write_text_file: write failed for " + path);
}

// entropy.csv, response_len.csv, accuracy.csv, clip_fractions.csv
inline void emit_plot_data(const std::vector<RunData>& runs, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto join = [&out_dir](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  write_text_file(join("entropy.csv"), compare_runs_csv(runs, "mean_entropy"));
  write_text_file(join("response_len.csv"), compare_runs_csv(runs, "mean_response_len"));
  write_text_file(join("accuracy.csv"), compare_runs_csv(runs, "greedy_accuracy"));
  write_text_file(join("clip_fractions.csv"),
                  compare_runs_csv_multi(
                      runs, {"clip_token_frac", "clip_seq_frac", "min_clipped_frac"}));
}

}  // namespace rlvr
