// SPDX-License-Identifier: Apache-2.0
//
// JSON / JSON-lines / CSV encodings of pools, datasets, predictions and reports.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swarm/agreement.hpp"
#include "swarm/checkpoint.hpp"
#include "swarm/evalsuite.hpp"
#include "swarm/template_engine.hpp"

namespace swarm {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Prompt pools
// ---------------------------------------------------------------------------

inline json pool_to_json(const PromptPool& pool) {
  json j;
  j["task_name"] = pool.task_name;
  j["labels"] = pool.label_set.labels;
  j["templates"] = json::array();
  for (const auto& t : pool.templates) {
    json tj;
    tj["name"] = t.name();
    tj["input_template"] = t.input().serialize();
    tj["choices"] = t.choices();
    if (t.target()) tj["target_template"] = t.target()->serialize();
    j["templates"].push_back(std::move(tj));
  }
  return j;
}

inline PromptPool pool_from_json(const json& j) {
  try {
    PromptPool pool;
    pool.task_name = j.at("task_name").get<std::string>();
    pool.label_set.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& tj : j.at("templates")) {
      std::optional<std::string> target;
      if (tj.contains("target_template") && !tj["target_template"].is_null()) {
        target = tj["target_template"].get<std::string>();
      }
      pool.templates.emplace_back(tj.at("name").get<std::string>(),
                                  tj.at("input_template").get<std::string>(),
                                  tj.at("choices").get<std::vector<std::string>>(),
                                  target ? std::optional<std::string_view>(*target) : std::nullopt);
    }
    return pool;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("prompt pool: ") + e.what());
  }
}

inline PromptPool load_pool(const std::filesystem::path& path) {
  try {
    return pool_from_json(json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, path.string() + ": " + e.what());
  }
}

inline void save_pool(const std::filesystem::path& path, const PromptPool& pool) {
  write_file(path, pool_to_json(pool).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Datasets (JSON lines)
// ---------------------------------------------------------------------------

inline json example_to_json(const Example& ex) {
  json j;
  j["fields"] = json::object();
  for (const auto& [k, v] : ex.fields) j["fields"][k] = v;
  j["label"] = ex.label ? json(*ex.label) : json(nullptr);
  return j;
}

inline Example example_from_json(const json& j) {
  Example ex;
  for (const auto& [k, v] : j.at("fields").items()) ex.fields[k] = v.get<std::string>();
  if (j.contains("label") && !j["label"].is_null()) ex.label = j["label"].get<int>();
  return ex;
}

inline std::string dataset_to_jsonl(const std::vector<Example>& data) {
  std::string out;
  for (const auto& ex : data) out += example_to_json(ex).dump() + "\n";
  return out;
}

inline std::vector<Example> dataset_from_jsonl(std::string_view text) {
  std::vector<Example> data;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      data.push_back(example_from_json(json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return data;
}

inline std::vector<Example> load_dataset(const std::filesystem::path& path) {
  return dataset_from_jsonl(read_file(path));
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<Example>& data) {
  write_file(path, dataset_to_jsonl(data));
}

// ---------------------------------------------------------------------------
// Prediction dumps and agreement reports
// ---------------------------------------------------------------------------

struct PredictionDump {
  std::vector<std::string> example_ids;
  std::vector<std::vector<int>> predictions;
};

inline std::string prediction_dump_to_jsonl(const PredictionDump& dump) {
  std::string out;
  for (std::size_t i = 0; i < dump.predictions.size(); ++i) {
    json j;
    j["example_id"] = i < dump.example_ids.size() ? dump.example_ids[i] : std::to_string(i);
    j["predictions"] = dump.predictions[i];
    out += j.dump() + "\n";
  }
  return out;
}

inline PredictionDump prediction_dump_from_jsonl(std::string_view text) {
  PredictionDump dump;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      const auto& id = j.at("example_id");
      dump.example_ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
      dump.predictions.push_back(j.at("predictions").get<std::vector<int>>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::format, "prediction dump line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dump;
}

inline json agreement_to_json(const AgreementReport& r) {
  json j;
  j["p_i"] = r.p_i;
  j["P_bar"] = r.p_bar;
  j["P_e"] = r.p_e;
  j["q"] = r.q;
  j["kappa"] = r.kappa;
  j["collapsed"] = r.collapsed;
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation reports and comparison tables
// ---------------------------------------------------------------------------

inline json eval_report_to_json(const EvalReport& r) {
  json j;
  j["task"] = r.task;
  j["num_prompts"] = r.num_prompts;
  j["N"] = r.n;
  j["per_prompt_accuracy"] = r.per_prompt_accuracy;
  j["ensemble_accuracy"] = r.ensemble_accuracy;
  j["median_accuracy"] = r.median_accuracy;
  j["kappa_on_eval"] = r.kappa_on_eval;
  j["kappa_collapsed"] = r.kappa_collapsed;
  j["majority_fraction"] = r.majority_fraction;
  return j;
}

inline EvalReport eval_report_from_json(const json& j) {
  try {
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.num_prompts = j.at("num_prompts").get<std::size_t>();
    r.n = j.at("N").get<std::size_t>();
    r.per_prompt_accuracy = j.at("per_prompt_accuracy").get<std::vector<double>>();
    r.ensemble_accuracy = j.at("ensemble_accuracy").get<double>();
    r.median_accuracy = j.at("median_accuracy").get<double>();
    r.kappa_on_eval = j.at("kappa_on_eval").get<double>();
    r.kappa_collapsed = j.value("kappa_collapsed", false);
    r.majority_fraction = j.value("majority_fraction", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("eval report: ") + e.what());
  }
}

/// Shortest text that parses back to the same double.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "metric,baseline,candidate,delta\n";
  for (const auto& r : rows) {
    out += r.metric + "," + format_number(r.baseline) + "," + format_number(r.candidate_value) + "," +
           format_number(r.delta) + "\n";
  }
  return out;
}

}  // namespace swarm
