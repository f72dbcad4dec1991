#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "checks.hpp"
#include "fixtures.hpp"

using namespace verbdiff::testing;

namespace {

enum class Verdict { pass, fail, skip };

int failures = 0;

void report(int id, Verdict verdict, const std::string& detail) {
  const char* word = verdict == Verdict::pass ? "PASS" : verdict == Verdict::fail ? "FAIL" : "SKIP";
  if (verdict == Verdict::fail) ++failures;
  std::cout << "criterion " << id << ": " << word << "  " << detail << std::endl;
}

Verdict verdict(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

template <typename F>
double timed(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : "; ") + s;
  return out;
}

void gradients() {
  std::vector<GradientCase> cases;
  const double seconds = timed([&] { cases = gradient_suite(50, 2024); });
  bool ok = seconds < kGradientSeconds;
  std::ostringstream d;
  d << std::setprecision(3);
  for (const auto& c : cases) {
    ok = ok && c.instances == 50 && c.max_relative_error <= kGradientTolerance;
    d << c.loss << " " << c.max_relative_error << ", ";
  }
  d << "in " << seconds << " s";
  report(1, verdict(ok && cases.size() == 5), d.str());
}

void centroids() {
  CentroidReport r;
  const double seconds = timed([&] { r = centroid_suite(100, 77); });
  std::ostringstream d;
  d << std::setprecision(3) << "max error " << r.max_error << " over " << r.maps << " maps, uniform "
    << (r.uniform_exact ? "exact" : "off") << ", delta " << (r.delta_exact ? "exact" : "off") << ", " << seconds << " s";
  report(2, verdict(r.maps == 100 && r.max_error <= kCentroidTolerance && r.uniform_exact && r.delta_exact &&
                    seconds < kCentroidSeconds),
         d.str());
}

void effective_numbers() {
  const EffectiveNumberReport r = effective_number_suite();
  std::ostringstream d;
  d << std::setprecision(3) << "limit error " << r.worst_limit_error << ", 2.71 error " << r.double_error
    << ", rational " << (r.rational_exact ? "exact" : "off");
  report(3, verdict(r.alpha_one_exact && r.strictly_increasing && r.worst_limit_error <= kLimitTolerance &&
                    r.rational_exact),
         d.str());
}

void pipeline() {
  const auto mismatches = pipeline_suite();
  const RealDataReport real = real_data_check(scratch_dir("acceptance_real"));
  bool ok = mismatches.empty();
  std::string detail = ok ? "fixture matches" : join(mismatches);
  if (real.attempted) {
    ok = ok && real.prompts == 501 && real.images == 61114;
    detail += ", real data " + std::to_string(real.prompts) + " prompts / " + std::to_string(real.images) + " images";
  } else {
    detail += ", real data not supplied";
  }
  if (!real.note.empty()) detail += " (" + real.note + ")";
  report(4, verdict(ok), detail);
}

void training() {
  const ToyRunReport r = toy_training_run(scratch_dir("acceptance_toy"), acceptance_train_config());
  const double ratio = r.first_mean > 0.0 ? r.last_mean / r.first_mean : 1.0;
  std::ostringstream d;
  d << std::setprecision(4) << "ratio " << ratio << " (first " << r.first_mean << ", last " << r.last_mean << "), "
    << r.steps << " steps in " << r.seconds << " s, frozen " << (r.frozen_unchanged ? "unchanged" : "CHANGED")
    << ", checkpoint " << (r.checkpoint_round_trip ? "identical" : "differs") << ", rerun "
    << (r.metrics_reproduced ? "identical" : "differs");
  report(5, verdict(r.steps == kToyRunSteps && ratio <= kLossRatioGate && r.seconds < kToyRunSeconds &&
                    r.frozen_unchanged && r.checkpoint_round_trip && r.metrics_reproduced),
         d.str());
  std::ostringstream g;
  g << std::setprecision(4) << "gap " << r.gap_before << " -> " << r.gap_after;
  report(6, verdict(r.gap_after > r.gap_before), g.str());
}

void metrics() {
  const auto mismatches = metric_harness_suite(100, 31);
  report(7, verdict(mismatches.empty()), mismatches.empty() ? "settings, KO >= Default, VQA question" : join(mismatches));
}

void similarity_table() {
  const SimilarityTableReport r = similarity_table_check();
  if (!r.available) {
    report(8, Verdict::skip, r.note);
    return;
  }
  std::ostringstream d;
  d << std::setprecision(4) << "clip riding/washing " << r.clip_riding_washing << ", sentence riding/washing "
    << r.sentence_riding_washing << ", riding/sitting on " << r.sentence_riding_sitting;
  report(8, verdict(std::abs(r.clip_riding_washing - 0.8081) <= kTableTolerance &&
                    std::abs(r.sentence_riding_washing - 0.7253) <= kTableTolerance &&
                    r.sentence_riding_washing < r.sentence_riding_sitting),
         d.str());
}

}  // namespace

int main(int argc, char** argv) {
  bool report_only = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--report-only") == 0) {
      report_only = true;
    } else {
      std::cerr << "usage: acceptance [--report-only]\n";
      return 2;
    }
  }
  gradients();
  centroids();
  effective_numbers();
  pipeline();
  training();
  metrics();
  similarity_table();
  std::cout << "acceptance finished: " << failures << " failing" << std::endl;
  return report_only ? 0 : (failures == 0 ? 0 : 1);
}
