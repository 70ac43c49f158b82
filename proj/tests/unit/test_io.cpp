// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"
#include "swarm/io.hpp"

using namespace swarm;
using namespace swarm::testing;

TEST(PoolJson, RoundTrip) {
  auto pool = micro_pool(3);
  pool.templates.emplace_back("tt", "{text}", std::vector<std::string>{"a", "b"},
                              std::optional<std::string_view>("{text} is {choice}"));
  const auto j = pool_to_json(pool);
  const auto back = pool_from_json(j);
  EXPECT_EQ(pool_to_json(back), j);
  ASSERT_EQ(back.templates.size(), 4u);
  EXPECT_TRUE(back.templates[3].target().has_value());
  EXPECT_FALSE(back.templates[0].target().has_value());
}

TEST(PoolJson, Errors) {
  EXPECT_THROW(pool_from_json(json::parse(R"({"labels": ["a", "b"]})")), Error);
  EXPECT_THROW(pool_from_json(json::parse(R"({"task_name": "t", "labels": ["a", "b"],
    "templates": [{"name": "p", "input_template": "{unclosed", "choices": ["x", "y"]}]})")),
               Error);
  const auto dir = std::filesystem::temp_directory_path() / "swarm_io_test";
  std::filesystem::create_directories(dir);
  write_file(dir / "bad.json", "{not json");
  try {
    load_pool(dir / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, JsonlRoundTripAndBlankLines) {
  std::vector<Example> data{text_example("good \"film\"", 0), text_example("bad\nline"),
                            text_example("", 1)};
  data[1].fields["other"] = "x";
  const auto text = dataset_to_jsonl(data);
  const auto back = dataset_from_jsonl(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].fields, data[i].fields);
    EXPECT_EQ(back[i].label, data[i].label);
  }
  EXPECT_EQ(dataset_from_jsonl("\n" + text + "\n  \n").size(), 3u);
}

TEST(Dataset, BadLineIsReportedByNumber) {
  try {
    dataset_from_jsonl("{\"fields\": {\"text\": \"a\"}}\n{oops}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(PredictionDump, RoundTripFeedsKappa) {
  PredictionDump dump{{"a", "b", "c"}, {{0, 0, 1}, {1, 1, 1}, {0, 1, 0}}};
  const auto back = prediction_dump_from_jsonl(prediction_dump_to_jsonl(dump));
  EXPECT_EQ(back.example_ids, dump.example_ids);
  EXPECT_EQ(back.predictions, dump.predictions);
  const auto numeric = prediction_dump_from_jsonl("{\"example_id\": 7, \"predictions\": [1, 0]}\n");
  EXPECT_EQ(numeric.example_ids.front(), "7");
  const auto j = agreement_to_json(fleiss_kappa(build_matrix(back.predictions, 2)));
  EXPECT_TRUE(j.contains("kappa"));
  EXPECT_EQ(j["p_i"].size(), 3u);
}

TEST(EvalReportJson, RoundTripIsExact) {
  EvalReport r;
  r.task = "t";
  r.num_prompts = 2;
  r.n = 3;
  r.per_prompt_accuracy = {1.0 / 3.0, 2.0 / 3.0};
  r.ensemble_accuracy = 2.0 / 3.0;
  r.median_accuracy = 0.5;
  r.kappa_on_eval = -0.125;
  r.majority_fraction = 0.5;
  const auto back = eval_report_from_json(json::parse(eval_report_to_json(r).dump()));
  EXPECT_EQ(back.per_prompt_accuracy, r.per_prompt_accuracy);
  EXPECT_EQ(back.kappa_on_eval, r.kappa_on_eval);
  EXPECT_EQ(back.n, 3u);
  EXPECT_THROW(eval_report_from_json(json::parse("{}")), Error);
}

TEST(Csv, ComparisonNumbersRoundTrip) {
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_number(v)), v);
  const std::vector<ComparisonRow> rows{{"kappa", 1, 0.25, v, v - 0.25}};
  const auto csv = comparison_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "metric,baseline,candidate,delta");
  EXPECT_NE(csv.find("kappa,0.25,"), std::string::npos);
}
