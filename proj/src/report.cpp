#include "cogap/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cogap {

namespace fs = std::filesystem;

std::string to_string(Verdict verdict) { return verdict == Verdict::gap_found ? "gap_found" : "no_gap"; }

Verdict parse_verdict(const std::string& text) {
  if (text == "gap_found") return Verdict::gap_found;
  if (text == "no_gap") return Verdict::no_gap;
  throw std::invalid_argument("unknown verdict '" + text + "'");
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "text") return ReportFormat::text;
  if (text == "csv") return ReportFormat::csv;
  throw std::invalid_argument("unknown report format '" + text + "' (expected text or csv)");
}

std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

std::vector<RankedClass> top_k(const Tensor& probs, const std::vector<std::string>& class_names, std::size_t k) {
  if (probs.rank() != 1 || probs.size() != class_names.size()) {
    throw std::invalid_argument("top_k: " + std::to_string(probs.size()) + " probabilities for " +
                                std::to_string(class_names.size()) + " class names");
  }
  if (k < 1 || k > probs.size()) {
    throw std::invalid_argument("top_k: k = " + std::to_string(k) + " outside [1, " + std::to_string(probs.size()) + "]");
  }
  std::vector<std::size_t> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::vector<RankedClass> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({idx[i], class_names[idx[i]], probs[idx[i]]});
  return out;
}

Verdict gap_verdict(const Tensor& initial_probs, const Tensor& worst_probs, std::size_t original_class,
                    float drop_threshold) {
  if (original_class >= initial_probs.size() || original_class >= worst_probs.size()) {
    throw std::invalid_argument("gap_verdict: original class out of range");
  }
  const float drop = initial_probs[original_class] - worst_probs[original_class];
  return drop > drop_threshold ? Verdict::gap_found : Verdict::no_gap;
}

AttackOutcome attack(const ModelWeights& model, const Image& image, const ChangeSpec& spec,
                     const AttackOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  AttackOutcome out;
  out.trace = worst_case_search(model, image, spec);
  const auto t1 = std::chrono::steady_clock::now();

  const auto& initial = out.trace.iterations.front();
  const auto& worst = select_worst(out.trace);
  const std::size_t k = options.top_k == 0 ? std::min<std::size_t>(10, model.num_classes()) : options.top_k;

  GapReport& r = out.report;
  r.spec_description = spec.description;
  r.original_class = out.trace.original_class;
  r.original_class_name = model.class_names[r.original_class];
  r.initial_topk = top_k(initial.probs, model.class_names, k);
  r.worst_topk = top_k(worst.probs, model.class_names, k);
  r.worst_iteration_index = worst.index;
  r.original_class_prob_drop = initial.original_class_prob - worst.original_class_prob;
  r.verdict = gap_verdict(initial.probs, worst.probs, r.original_class, options.drop_threshold);
  r.stop_reason = out.trace.stop_reason;
  r.elapsed_seconds = std::chrono::duration<double>(t1 - t0).count();
  return out;
}

namespace {

std::string iteration_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%04zu.ppm", i);
  return buf;
}

// Removes everything registered unless released.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)), created_dir_(!fs::exists(dir_)) {
    fs::create_directories(dir_);
  }
  ~OutputGuard() {
    if (released_) return;
    std::error_code ec;
    for (const auto& f : files_) fs::remove(f, ec);
    if (created_dir_) fs::remove_all(dir_, ec);
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;

  fs::path add(const std::string& name) {
    files_.push_back(dir_ / name);
    return files_.back();
  }
  void release() noexcept { released_ = true; }

 private:
  fs::path dir_;
  bool created_dir_;
  bool released_ = false;
  std::vector<fs::path> files_;
};

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(row));
      row.clear();
      any = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw std::invalid_argument("csv: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    records.push_back(std::move(row));
  }
  return records;
}

double parse_number(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw std::invalid_argument(std::string("csv: bad ") + what + " '" + s + "'");
  return v;
}

std::size_t parse_index(const std::string& s, const char* what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::invalid_argument(std::string("csv: bad ") + what + " '" + s + "'");
  }
  return std::stoul(s);
}

constexpr const char* kReportHeader =
    "row,rank,class_index,class_name,probability,worst_iteration,original_class_prob_drop,verdict,stop_reason,"
    "description";
constexpr const char* kTraceHeader = "index,target_prob,original_class_prob,loss_to_target";

}  // namespace

std::string render_report(const GapReport& report, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::csv) {
    os << kReportHeader << '\n';
    auto table = [&](const char* tag, const std::vector<RankedClass>& rows) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        os << tag << ',' << (i + 1) << ',' << rows[i].class_index << ',' << csv_escape(rows[i].name) << ','
           << format_fixed6(rows[i].probability) << ",,,,,\n";
      }
    };
    table("initial", report.initial_topk);
    table("worst", report.worst_topk);
    os << "summary,," << report.original_class << ',' << csv_escape(report.original_class_name) << ",,"
       << report.worst_iteration_index << ',' << format_fixed6(report.original_class_prob_drop) << ','
       << to_string(report.verdict) << ',' << to_string(report.stop_reason) << ','
       << csv_escape(report.spec_description) << '\n';
    return os.str();
  }

  std::size_t name_width = 5;
  for (const auto* list : {&report.initial_topk, &report.worst_topk})
    for (const auto& r : *list) name_width = std::max(name_width, r.name.size());
  const std::size_t column = name_width + 12;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  auto cell = [&](const RankedClass& r) { return pad(pad(r.name, name_width) + "  " + format_fixed6(r.probability), column); };

  os << "Change:          " << (report.spec_description.empty() ? "(no description)" : report.spec_description) << '\n';
  os << "Original class:  " << report.original_class_name << '\n';
  os << "Stop reason:     " << to_string(report.stop_reason) << '\n';
  os << "Worst iteration: " << report.worst_iteration_index << "\n\n";
  os << "Rank  " << pad("Initial (iteration 0)", column) << "    "
     << "Worst (iteration " << report.worst_iteration_index << ")\n";
  const std::size_t rows = std::max(report.initial_topk.size(), report.worst_topk.size());
  for (std::size_t i = 0; i < rows; ++i) {
    char rank[32];
    std::snprintf(rank, sizeof rank, "%4zu  ", i + 1);
    os << rank << (i < report.initial_topk.size() ? cell(report.initial_topk[i]) : pad("", column)) << "    "
       << (i < report.worst_topk.size() ? cell(report.worst_topk[i]) : std::string()) << '\n';
  }
  os << "\nOriginal-class probability drop: " << format_fixed6(report.original_class_prob_drop) << '\n';
  os << (report.verdict == Verdict::gap_found ? "VERDICT: GAP FOUND" : "VERDICT: NO GAP") << '\n';
  return os.str();
}

GapReport parse_report_csv(const std::string& csv) {
  const auto records = csv_records(csv);
  if (records.empty() || records.front().size() != 10) throw std::invalid_argument("report csv: missing header");
  GapReport r;
  bool have_summary = false;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != 10) throw std::invalid_argument("report csv: row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    if (f[0] == "initial" || f[0] == "worst") {
      RankedClass rc{parse_index(f[2], "class index"), f[3], static_cast<float>(parse_number(f[4], "probability"))};
      auto& list = f[0] == "initial" ? r.initial_topk : r.worst_topk;
      if (parse_index(f[1], "rank") != list.size() + 1) throw std::invalid_argument("report csv: ranks out of order");
      list.push_back(std::move(rc));
    } else if (f[0] == "summary") {
      r.original_class = parse_index(f[2], "class index");
      r.original_class_name = f[3];
      r.worst_iteration_index = parse_index(f[5], "worst iteration");
      r.original_class_prob_drop = static_cast<float>(parse_number(f[6], "drop"));
      r.verdict = parse_verdict(f[7]);
      r.stop_reason = parse_stop_reason(f[8]);
      r.spec_description = f[9];
      have_summary = true;
    } else {
      throw std::invalid_argument("report csv: unknown row kind '" + f[0] + "'");
    }
  }
  if (!have_summary) throw std::invalid_argument("report csv: missing summary row");
  return r;
}

std::string render_trace_csv(const SearchTrace& trace) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& rec : trace.iterations) {
    out += std::to_string(rec.index) + "," + format_fixed6(rec.target_prob) + "," +
           format_fixed6(rec.original_class_prob) + "," + format_fixed6(rec.loss_to_target) + "\n";
  }
  return out;
}

std::vector<TraceRow> parse_trace_csv(const std::string& csv) {
  const auto records = csv_records(csv);
  if (records.empty() || records.front().size() != 4) throw std::invalid_argument("trace csv: missing header");
  std::vector<TraceRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    if (f.size() != 4) throw std::invalid_argument("trace csv: row " + std::to_string(i) + " malformed");
    rows.push_back({parse_index(f[0], "index"), parse_number(f[1], "target_prob"),
                    parse_number(f[2], "original_class_prob"), parse_number(f[3], "loss_to_target")});
  }
  return rows;
}

AttackOutcome run_attack(const fs::path& model_path, const fs::path& image_path, const fs::path& spec_path,
                         const fs::path& out_dir, const AttackOptions& options) {
  const ModelWeights model = load_weights(model_path);
  const Image image = read_ppm(image_path);
  const ChangeSpec spec = parse_change_spec(spec_path);

  OutputGuard guard(out_dir);
  AttackOutcome outcome = attack(model, image, spec, options);
  for (const auto& rec : outcome.trace.iterations) write_ppm(rec.image, guard.add(iteration_file(rec.index)));
  write_ppm(select_worst(outcome.trace).image, guard.add("worst.ppm"));
  write_file_atomic(guard.add("trace.csv"), render_trace_csv(outcome.trace));
  write_file_atomic(guard.add("report.txt"), render_report(outcome.report, ReportFormat::text));
  write_file_atomic(guard.add("report.csv"), render_report(outcome.report, ReportFormat::csv));
  guard.release();
  return outcome;
}

}  // namespace cogap
