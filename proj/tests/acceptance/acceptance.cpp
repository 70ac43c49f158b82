// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
// Usage: swarm_acceptance [--out DIR] [--only N[,N...]]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "swarm/agreement.hpp"
#include "swarm/distill.hpp"
#include "swarm/lora.hpp"
#include "swarm/workbench/experiments.hpp"

using namespace swarm;
using namespace swarm::workbench;
namespace fs = std::filesystem;

namespace {

// Tolerances and limits.
constexpr double kGradRelTol = 1e-4;
// Denominator floor of the relative error: central differences with h = 1e-5
// carry ~1e-10 of rounding noise, which would swamp exact zero gradients.
constexpr double kGradScaleFloor = 1e-6;
constexpr double kKappaTol = 1e-12;
constexpr double kNormTol = 1e-12;
constexpr double kPipelineBudgetSeconds = 15 * 60;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

std::vector<Example> random_texts(std::mt19937_64& rng, std::size_t n) {
  const std::vector<std::string> words{"good", "bad", "film", "dog", "x", "meal", "so", "dull", "the", "cat"};
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const std::size_t len = 1 + rng() % 5;
    for (std::size_t w = 0; w < len; ++w) s += (w ? " " : "") + words[rng() % words.size()];
    out.push_back(testing::text_example(s));
  }
  return out;
}

// 1 ------------------------------------------------------------------------

Outcome param_count_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto small = param_count(1, 1024, 16384, 24);
  const auto large = param_count(1, 1024, 65536, 24);
  const double ms = seconds_since(t0) * 1e3;
  return {small == 1671168u && large == 6389760u && ms < 1.0,
          "T0-3B " + std::to_string(small) + ", T0-11B " + std::to_string(large) + ", " + fmt(ms) + " ms"};
}

// 2 ------------------------------------------------------------------------

Outcome zero_init_identity() {
  std::mt19937_64 rng(2);
  const auto base = ScorerModel::init(testing::micro_config(), 201);
  auto adapted = base;
  attach(adapted, LoraSettings{}, 202);
  const auto pool = testing::micro_pool(3);
  const auto probes = random_texts(rng, 100);
  std::size_t mismatches = 0;
  for (const auto& ex : probes) {
    for (const auto& tmpl : pool.templates) {
      const auto a = label_distribution(base, tmpl, ex);
      const auto b = label_distribution(adapted, tmpl, ex);
      if (a.probs != b.probs || a.raw_log_scores != b.raw_log_scores) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(probes.size()) + " probes x 3 prompts, " + std::to_string(mismatches) +
                               " mismatches"};
}

// 3 ------------------------------------------------------------------------

Outcome pair_loss_gradients() {
  auto model = ScorerModel::init(testing::micro_config(), 301);
  attach(model, LoraSettings{2, 4.0, 0.0, 0.3}, 302);
  std::mt19937_64 rng(303);
  std::normal_distribution<double> d(0.0, 0.2);
  for (Parameter* p : model.trainable_parameters())
    for (double& v : p->value.data()) v = d(rng);

  const auto pool = testing::micro_pool(3);
  const auto ex = testing::text_example("good dog film");
  double worst = 0.0;
  std::size_t checked = 0;
  // (teacher, student): two swarm pairs and one self pair, raw and normalized students.
  for (const auto& [ti, si] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 0}, {1, 1}}) {
    for (bool normalized : {false, true}) {
      const auto teacher = pseudo_target(model, pool, ti, ex);
      model.zero_grad();
      {
        Tape t;
        t.backward(pair_loss(t, model, teacher, pool.templates[si], ex, normalized));
      }
      auto loss = [&] {
        Tape t;
        t.set_grad_enabled(false);
        return pair_loss(t, model, teacher, pool.templates[si], ex, normalized).scalar();
      };
      for (Parameter* p : model.trainable_parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
          const double fd = testing::central_difference(p->value[i], loss);
          const double rel = std::abs(fd - p->grad[i]) / std::max(std::abs(fd) + std::abs(p->grad[i]), kGradScaleFloor);
          worst = std::max(worst, rel);
          ++checked;
        }
      }
    }
  }
  return {worst < kGradRelTol, std::to_string(checked) + " entries, max relative error " + fmt(worst)};
}

// 4 ------------------------------------------------------------------------

double kappa_by_pairs(const std::vector<std::vector<int>>& preds, std::size_t labels) {
  const std::size_t n = preds.size(), k = preds.front().size();
  double agree = 0.0;
  for (const auto& row : preds) {
    std::size_t same = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        if (a != b && row[a] == row[b]) ++same;
    agree += static_cast<double>(same) / static_cast<double>(k * (k - 1));
  }
  const double p_bar = agree / static_cast<double>(n);
  std::vector<double> share(labels, 0.0);
  for (const auto& row : preds)
    for (int y : row) share[y] += 1.0 / static_cast<double>(n * k);
  double p_e = 0.0;
  for (double q : share) p_e += q * q;
  return (p_bar - p_e) / (1.0 - p_e);
}

Outcome kappa_oracle() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  std::size_t compared = 0, collapsed = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 20, k = 2 + rng() % 9, labels = 2 + rng() % 4;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(labels) - 1);
    std::vector<std::vector<int>> preds(n, std::vector<int>(k));
    for (auto& row : preds)
      for (int& y : row) y = pick(rng);
    const auto r = fleiss_kappa(build_matrix(preds, labels));
    if (r.collapsed) {
      ++collapsed;
      continue;
    }
    worst = std::max(worst, std::abs(r.kappa - kappa_by_pairs(preds, labels)));
    ++compared;
  }
  const auto hand = fleiss_kappa(build_matrix({{0, 0, 1}, {1, 1, 1}}, 2));
  const auto flat = fleiss_kappa(build_matrix({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}, 3));
  const bool pass = worst <= kKappaTol && hand.kappa == 0.25 && !hand.collapsed && flat.kappa == 0.0 &&
                    flat.collapsed;
  return {pass, std::to_string(compared) + " matrices (+" + std::to_string(collapsed) + " collapsed), max |diff| " +
                    fmt(worst) + "; hand case " + fmt(hand.kappa, 17) + "; collapse kappa " + fmt(flat.kappa) +
                    (flat.collapsed ? " flagged" : " not flagged")};
}

// 5 ------------------------------------------------------------------------

Outcome normalization() {
  std::mt19937_64 rng(5);
  double worst_sum = 0.0, worst_match = 0.0;
  std::size_t cases = 0;
  // Multi-token verbalizers exercise whole-string scoring.
  const PromptTemplate tmpl("p", "{text} | verdict:", {"quite good", "bad", "not sure at all"});
  for (int m = 0; m < 20; ++m) {
    const auto model = ScorerModel::init(testing::micro_config(), 500 + m);
    for (const auto& ex : random_texts(rng, 10)) {
      const auto dist = label_distribution(model, tmpl, ex);
      std::vector<double> raw;
      for (const auto& choice : tmpl.choices()) raw.push_back(sequence_log_prob(model, render_input(tmpl, ex), choice));
      double z = 0.0;
      for (double r : raw) z += std::exp(r);
      double sum = 0.0;
      for (std::size_t y = 0; y < raw.size(); ++y) {
        worst_match = std::max(worst_match, std::abs(dist.probs[y] - std::exp(raw[y]) / z));
        sum += dist.probs[y];
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      ++cases;
    }
  }
  return {worst_sum <= kNormTol && worst_match <= kNormTol,
          std::to_string(cases) + " cases, max |sum-1| " + fmt(worst_sum) + ", max |p - brute force| " +
              fmt(worst_match)};
}

// 6 ------------------------------------------------------------------------

std::size_t select_by_enumeration(const KappaTrajectory& tr) {
  for (std::size_t t = 0; t < tr.size(); ++t) {
    bool decreasing = true;
    for (std::size_t s = t; s + 1 < tr.size(); ++s) decreasing = decreasing && tr[s].kappa > tr[s + 1].kappa;
    if (decreasing) return t;
  }
  return tr.size() - 1;
}

KappaTrajectory trajectory(const std::vector<double>& kappas) {
  KappaTrajectory tr;
  for (std::size_t i = 0; i < kappas.size(); ++i) tr.push_back({static_cast<std::int64_t>(i) * 50, kappas[i]});
  return tr;
}

Outcome selection() {
  const double levels[3] = {0.1, 0.4, 0.7};
  std::size_t checked = 0, wrong = 0;
  for (std::size_t len = 1; len <= 6; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<double> k(len);
      std::size_t c = code;
      for (auto& v : k) {
        v = levels[c % 3];
        c /= 3;
      }
      const auto tr = trajectory(k);
      wrong += select_checkpoint_index(tr) != select_by_enumeration(tr);
      ++checked;
    }
  }
  // Named shapes: rise then fall, monotone rise, plateau then fall.
  const bool named = select_checkpoint(trajectory({0.1, 0.4, 0.7, 0.4, 0.1})) == 100 &&
                     select_checkpoint(trajectory({0.1, 0.4, 0.7})) == 100 &&
                     select_checkpoint(trajectory({0.4, 0.7, 0.7, 0.4, 0.1})) == 100;
  return {wrong == 0 && named, std::to_string(checked) + " trajectories, " + std::to_string(wrong) +
                                   " disagreements; named shapes " + (named ? "ok" : "wrong")};
}

// 7-9 ----------------------------------------------------------------------

Outcome method_effect(const PipelineResult& res) {
  std::size_t improved = 0, swarm_ge_self = 0;
  std::ostringstream d;
  for (const auto& e : res.effects) {
    const double swarm = mean_ensemble(e.swarm);
    const double self = mean_ensemble(e.self);
    const double base_kappa = e.swarm.front().base_kappa;
    const bool beats_base = swarm > e.base.ensemble_accuracy;
    const bool kappa_up = mean_selected_kappa(e.swarm) > base_kappa;
    improved += beats_base && kappa_up;
    swarm_ge_self += swarm >= self;
    d << e.task << ": base " << fmt(e.base.ensemble_accuracy) << " swarm " << fmt(swarm) << " self " << fmt(self)
      << " kappa " << fmt(base_kappa) << "->" << fmt(mean_selected_kappa(e.swarm)) << "; ";
  }
  const bool fast = res.total_seconds < kPipelineBudgetSeconds;
  d << "improved " << improved << "/3, swarm>=self " << swarm_ge_self << "/3, pipeline " << fmt(res.total_seconds)
    << " s";
  return {improved >= 2 && swarm_ge_self >= 2 && fast, d.str()};
}

Outcome collapse(const PipelineResult& res) {
  std::size_t collapsed = 0, selected_flagged = 0;
  for (const auto& p : res.collapse) {
    collapsed += p.full_finetune.final_collapsed && p.full_finetune.final_suffix_decreasing;
    selected_flagged += p.lora_selected.selected_collapsed;
  }
  return {collapsed >= 1 && selected_flagged == 0,
          std::to_string(collapsed) + "/" + std::to_string(res.collapse.size()) +
              " full fine-tuning runs collapse with a decreasing final kappa; " + std::to_string(selected_flagged) +
              " selected adapter checkpoints flagged"};
}

std::vector<std::pair<std::string, std::string>> tree(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    files.emplace_back(fs::relative(e.path(), dir).string(), read_file(e.path()));
  }
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  const auto ta = tree(a), tb = tree(b);
  std::size_t differing = 0;
  std::string first;
  std::set<std::string> names_a, names_b;
  for (const auto& f : ta) names_a.insert(f.first);
  for (const auto& f : tb) names_b.insert(f.first);
  if (names_a != names_b) return {false, "file sets differ"};
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].second != tb[i].second) {
      if (differing++ == 0) first = ta[i].first;
    }
  }
  return {differing == 0 && !ta.empty(), std::to_string(ta.size()) + " files compared, " +
                                             std::to_string(differing) + " differ" +
                                             (first.empty() ? "" : " (first: " + first + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_runs";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--out DIR] [--only N[,N...]]\n", argv[0]);
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };
  int failures = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& check) {
    if (!wanted(n)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %d  %-22s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "lora-param-count", param_count_check);
  report(2, "zero-init-identity", zero_init_identity);
  report(3, "pair-loss-gradient", pair_loss_gradients);
  report(4, "fleiss-kappa", kappa_oracle);
  report(5, "label-normalization", normalization);
  report(6, "checkpoint-selection", selection);

  if (wanted(7) || wanted(8) || wanted(9)) {
    PipelineOptions opt;
    opt.grid = false;
    auto progress = [](const std::string& s) {
      std::fprintf(stderr, "  %s\n", s.c_str());
      std::fflush(stderr);
    };
    fs::remove_all(out);
    PipelineResult first;
    std::string error;
    try {
      first = run_pipeline(out / "run-a", opt, progress);
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto guarded = [&](const std::function<Outcome()>& f) {
      return [&, f] { return error.empty() ? f() : Outcome{false, "pipeline failed: " + error}; };
    };
    report(7, "method-effect", guarded([&] { return method_effect(first); }));
    report(8, "collapse-ablation", guarded([&] { return collapse(first); }));
    if (wanted(9)) {
      report(9, "determinism", guarded([&] {
               run_pipeline(out / "run-b", opt, progress);
               return determinism(out / "run-a", out / "run-b");
             }));
    }
  }
  std::printf("%s\n", failures == 0 ? "ALL PASS" : (std::to_string(failures) + " FAILED").c_str());
  return failures == 0 ? 0 : 1;
}
