#include <doctest.h>

#include <json.hpp>

#include "cogap/dataset.hpp"
#include "cogap/report.hpp"
#include "cogap/rng.hpp"
#include "test_util.hpp"

using namespace cogap;

namespace {

std::vector<std::string> names(std::size_t k) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < k; ++i) v.push_back("class_" + std::to_string(i));
  return v;
}

GapReport sample_report(Verdict verdict) {
  GapReport r;
  r.spec_description = "The color of a car does not determine that it is a car.";
  r.original_class = 0;
  r.original_class_name = "vehicle";
  r.initial_topk = {{0, "vehicle", 0.97f}, {1, "sign", 0.03f}};
  r.worst_topk = {{0, "vehicle", 0.94f}, {1, "sign", 0.06f}};
  r.worst_iteration_index = 15;
  r.original_class_prob_drop = 0.03f;
  r.verdict = verdict;
  r.stop_reason = StopReason::budget_exhausted;
  return r;
}

// Writes a fresh-model attack setup into `dir`; returns the paths.
struct AttackFiles {
  std::filesystem::path model, image, spec;
};

AttackFiles attack_setup(const TempDir& dir, bool frozen_mask) {
  const auto set = generate_dataset(2, DatasetMode::biased, 32, 3);
  AttackFiles f{dir / "m.wcgf", dir / "img.ppm", dir / "spec.json"};
  save_weights(build_model(2, 32, 1, glyph_class_names()), f.model);
  write_ppm(set.images[0], f.image);
  if (frozen_mask) {
    write_mask(SegmentationMask(32, 32, false), dir / "mask.pgm");
  } else {
    write_mask(glyph_mask(0, set), dir / "mask.pgm");
  }
  const nlohmann::json spec = {{"mask", "mask.pgm"},     {"channels", {"R"}},          {"step_epsilon", 0.01},
                               {"target_class", 1},      {"max_iterations", 6},        {"plateau_window", 2},
                               {"plateau_delta", 0.0},   {"description", "paint, \"quoted\""}};
  write_bytes(f.spec, spec.dump());
  return f;
}

}  // namespace

TEST_CASE("top_k") {
  SUBCASE("uniform ties keep class order") {
    const auto r = top_k(Tensor({5}, std::vector<float>(5, 0.2f)), names(5), 3);
    REQUIRE(r.size() == 3);
    CHECK(r[0].class_index == 0);
    CHECK(r[1].class_index == 1);
    CHECK(r[2].class_index == 2);
  }
  SUBCASE("one-hot") {
    const auto r = top_k(Tensor({4}, {0, 0, 1, 0}), names(4), 2);
    CHECK(r[0].class_index == 2);
    CHECK(r[0].probability == 1.0f);
    CHECK(r[0].name == "class_2");
  }
  SUBCASE("random against full sort") {
    Xorshift64Star rng(1);
    for (int t = 0; t < 50; ++t) {
      const std::size_t K = 1 + rng.below(20);
      Tensor p({K});
      for (float& v : p.data()) v = rng.below(6) / 5.0f;
      const std::size_t k = 1 + rng.below(K);
      std::vector<std::size_t> idx(K);
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p[a] != p[b] ? p[a] > p[b] : a < b; });
      const auto r = top_k(p, names(K), k);
      for (std::size_t i = 0; i < k; ++i) CHECK(r[i].class_index == idx[i]);
    }
  }
  SUBCASE("k out of range") {
    CHECK_THROWS_AS(top_k(Tensor({3}), names(3), 0), std::invalid_argument);
    CHECK_THROWS_AS(top_k(Tensor({3}), names(3), 4), std::invalid_argument);
  }
}

TEST_CASE("gap_verdict") {
  CHECK(gap_verdict(Tensor({2}, {0.97f, 0.03f}), Tensor({2}, {0.94f, 0.06f}), 0, 0.5f) == Verdict::no_gap);
  CHECK(gap_verdict(Tensor({2}, {0.98f, 0.02f}), Tensor({2}, {0.0001f, 0.9999f}), 0) == Verdict::gap_found);
  // 0.75 - 0.25 is exactly 0.5 in binary floating point.
  CHECK(gap_verdict(Tensor({2}, {0.75f, 0.25f}), Tensor({2}, {0.25f, 0.75f}), 0, 0.5f) == Verdict::no_gap);
  CHECK(gap_verdict(Tensor({2}, {0.75f, 0.25f}), Tensor({2}, {0.24f, 0.76f}), 0, 0.5f) == Verdict::gap_found);
}

TEST_CASE("render_report text") {
  const std::string no_gap = render_report(sample_report(Verdict::no_gap), ReportFormat::text);
  CHECK(no_gap.find("VERDICT: NO GAP") != std::string::npos);
  CHECK(no_gap.find("VERDICT: GAP FOUND") == std::string::npos);
  CHECK(no_gap.find("0.970000") != std::string::npos);
  CHECK(no_gap.find("0.940000") != std::string::npos);
  CHECK(render_report(sample_report(Verdict::gap_found), ReportFormat::text).find("VERDICT: GAP FOUND") !=
        std::string::npos);
}

TEST_CASE("render_report csv") {
  const GapReport r = sample_report(Verdict::gap_found);
  const std::string csv = render_report(r, ReportFormat::csv);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines - 1 == 2 * 2 + 1);  // header + 2k + 1
  CHECK(csv.find("\r") == std::string::npos);

  const GapReport back = parse_report_csv(csv);
  CHECK(render_report(back, ReportFormat::csv) == csv);
  CHECK(back.spec_description == r.spec_description);
  CHECK(back.verdict == r.verdict);
  CHECK(back.stop_reason == r.stop_reason);
  CHECK(back.worst_iteration_index == 15);
  CHECK(back.original_class_name == "vehicle");
  REQUIRE(back.initial_topk.size() == 2);
  CHECK(format_fixed6(back.initial_topk[0].probability) == "0.970000");
}

TEST_CASE("csv parse-back reproduces formatted numbers") {
  Xorshift64Star rng(9);
  for (int t = 0; t < 50; ++t) {
    GapReport r = sample_report(rng.below(2) ? Verdict::gap_found : Verdict::no_gap);
    r.spec_description = t % 3 == 0 ? "multi\nline, \"quoted\"" : "plain";
    const std::size_t k = 1 + rng.below(10);
    r.initial_topk.clear();
    r.worst_topk.clear();
    for (std::size_t i = 0; i < k; ++i) {
      r.initial_topk.push_back({i, "n" + std::to_string(i), static_cast<float>(rng.uniform())});
      r.worst_topk.push_back({k - i, "m," + std::to_string(i), static_cast<float>(rng.uniform())});
    }
    r.original_class_prob_drop = static_cast<float>(rng.uniform(-1, 1));
    const std::string csv = render_report(r, ReportFormat::csv);
    CHECK(std::count(csv.begin(), csv.end(), '\n') - 1 - (t % 3 == 0 ? 1 : 0) == static_cast<long>(2 * k + 1));
    const GapReport back = parse_report_csv(csv);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(format_fixed6(back.initial_topk[i].probability) == format_fixed6(r.initial_topk[i].probability));
      CHECK(format_fixed6(back.worst_topk[i].probability) == format_fixed6(r.worst_topk[i].probability));
      CHECK(back.worst_topk[i].name == r.worst_topk[i].name);
    }
    CHECK(format_fixed6(back.original_class_prob_drop) == format_fixed6(r.original_class_prob_drop));
    CHECK(back.spec_description == r.spec_description);
  }
}

TEST_CASE("malformed report csv") {
  CHECK_THROWS(parse_report_csv(""));
  CHECK_THROWS(parse_report_csv("row,rank,class_index,class_name,probability,worst_iteration,original_class_prob_drop,verdict,stop_reason,description\n"));
  CHECK_THROWS(parse_report_csv("a,b\n"));
}

TEST_CASE("run_attack writes every artifact") {
  TempDir dir;
  const auto f = attack_setup(dir, false);
  const auto out = dir / "run";
  const auto outcome = run_attack(f.model, f.image, f.spec, out);
  const std::size_t n = outcome.trace.iterations.size();
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%04zu.ppm", i);
    CHECK(std::filesystem::exists(out / name));
  }
  for (const char* name : {"worst.ppm", "trace.csv", "report.txt", "report.csv"}) CHECK(std::filesystem::exists(out / name));

  const auto rows = parse_trace_csv(read_bytes(out / "trace.csv"));
  REQUIRE(rows.size() == n);
  CHECK(read_bytes(out / "trace.csv").rfind("index,target_prob,original_class_prob,loss_to_target\n", 0) == 0);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(rows[i].index == i);
    CHECK(format_fixed6(rows[i].target_prob) == format_fixed6(outcome.trace.iterations[i].target_prob));
  }
  // Quantized dumps stay within half a level of the in-memory floats.
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%04zu.ppm", i);
    const Image back = read_ppm(out / name);
    const auto& mem = outcome.trace.iterations[i].image;
    for (std::size_t j = 0; j < mem.pixels.size(); ++j) CHECK(std::abs(back.pixels[j] - mem.pixels[j]) <= 1.0f / 510 + 1e-7f);
  }
  CHECK(read_bytes(out / "report.txt") == render_report(outcome.report, ReportFormat::text));
  CHECK(parse_report_csv(read_bytes(out / "report.csv")).spec_description == "paint, \"quoted\"");
  CHECK(outcome.report.original_class == outcome.trace.original_class);

  SUBCASE("rerun is byte-identical") {
    const auto out2 = dir / "run2";
    run_attack(f.model, f.image, f.spec, out2);
    CHECK(read_bytes(out / "trace.csv") == read_bytes(out2 / "trace.csv"));
    CHECK(read_bytes(out / "report.txt") == read_bytes(out2 / "report.txt"));
    CHECK(read_bytes(out / "worst.ppm") == read_bytes(out2 / "worst.ppm"));
  }
}

TEST_CASE("run_attack with a frozen mask") {
  TempDir dir;
  const auto f = attack_setup(dir, true);
  const auto outcome = run_attack(f.model, f.image, f.spec, dir / "run");
  CHECK(select_worst(outcome.trace).image.bit_identical(outcome.trace.iterations.front().image));
  CHECK(outcome.report.verdict == Verdict::no_gap);
  CHECK(read_bytes(dir / "run" / "worst.ppm") == read_bytes(dir / "run" / "iter_0000.ppm"));
}

TEST_CASE("run_attack failures leave no output behind") {
  TempDir dir;
  const auto f = attack_setup(dir, false);
  SUBCASE("missing model") {
    CHECK_THROWS(run_attack(dir / "absent.wcgf", f.image, f.spec, dir / "run"));
    CHECK_FALSE(std::filesystem::exists(dir / "run"));
  }
  SUBCASE("image size mismatch surfaces after the directory is created") {
    write_ppm(Image(16, 16, 0.5f), dir / "small.ppm");
    CHECK_THROWS_AS(run_attack(f.model, dir / "small.ppm", f.spec, dir / "run"), std::invalid_argument);
    CHECK_FALSE(std::filesystem::exists(dir / "run"));
  }
  SUBCASE("pre-existing directory keeps unrelated files") {
    std::filesystem::create_directories(dir / "run");
    write_bytes(dir / "run" / "keep.txt", "x");
    write_ppm(Image(16, 16, 0.5f), dir / "small.ppm");
    CHECK_THROWS(run_attack(f.model, dir / "small.ppm", f.spec, dir / "run"));
    CHECK(std::filesystem::exists(dir / "run" / "keep.txt"));
    CHECK(std::distance(std::filesystem::directory_iterator(dir / "run"), std::filesystem::directory_iterator{}) == 1);
  }
}
