#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cogap/search.hpp"

namespace cogap {

struct RankedClass {
  std::size_t class_index = 0;
  std::string name;
  float probability = 0.0f;
};

enum class Verdict { gap_found, no_gap };

std::string to_string(Verdict verdict);
Verdict parse_verdict(const std::string& text);

inline constexpr float kDefaultDropThreshold = 0.5f;

/// Engineer-facing outcome of one attack run.
struct GapReport {
  std::string spec_description;
  std::size_t original_class = 0;
  std::string original_class_name;
  std::vector<RankedClass> initial_topk;
  std::vector<RankedClass> worst_topk;
  std::size_t worst_iteration_index = 0;
  float original_class_prob_drop = 0.0f;
  Verdict verdict = Verdict::no_gap;
  StopReason stop_reason = StopReason::budget_exhausted;
  double elapsed_seconds = 0.0;  // console only, never rendered
};

/// k highest probabilities, descending; ties keep ascending class order.
std::vector<RankedClass> top_k(const Tensor& probs, const std::vector<std::string>& class_names, std::size_t k);

/// gap_found iff the original-class probability fell by strictly more than
/// `drop_threshold`.
Verdict gap_verdict(const Tensor& initial_probs, const Tensor& worst_probs, std::size_t original_class,
                    float drop_threshold = kDefaultDropThreshold);

struct AttackOptions {
  float drop_threshold = kDefaultDropThreshold;
  std::size_t top_k = 0;  // 0 means min(10, K)
};

struct AttackOutcome {
  SearchTrace trace;
  GapReport report;
};

/// Search plus verdict, no I/O.
AttackOutcome attack(const ModelWeights& model, const Image& image, const ChangeSpec& spec,
                     const AttackOptions& options = {});

/// Loads inputs, runs the attack and writes iter_NNNN.ppm, worst.ppm,
/// trace.csv, report.txt and report.csv into `out_dir`. On failure every
/// file written so far is removed and the error rethrown.
AttackOutcome run_attack(const std::filesystem::path& model_path, const std::filesystem::path& image_path,
                         const std::filesystem::path& spec_path, const std::filesystem::path& out_dir,
                         const AttackOptions& options = {});

enum class ReportFormat { text, csv };

ReportFormat parse_report_format(const std::string& text);

/// Text: side-by-side top-k tables and a VERDICT line. CSV: header, one row
/// per top-k entry (initial first), then one summary row.
std::string render_report(const GapReport& report, ReportFormat format);

/// Inverse of the CSV rendering.
GapReport parse_report_csv(const std::string& csv);

/// trace.csv body: index,target_prob,original_class_prob,loss_to_target.
std::string render_trace_csv(const SearchTrace& trace);

struct TraceRow {
  std::size_t index = 0;
  double target_prob = 0.0;
  double original_class_prob = 0.0;
  double loss_to_target = 0.0;
};

std::vector<TraceRow> parse_trace_csv(const std::string& csv);

/// Six-decimal fixed-point formatting used in every CSV.
std::string format_fixed6(double value);

}  // namespace cogap
