// Copyright 2026 The fnevr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Acceptance checks 1-11. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Criteria 8-11 drive the command-line binary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fnevr/harness/commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fnevr;
using clock_type = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kConservationTol = 1e-12;
constexpr double kConservationBudgetS = 5.0;
constexpr std::size_t kConservationTrials = 1000;
constexpr std::size_t kOracleTrials = 100;
constexpr std::size_t kGradTrials = 20;
constexpr double kGradBudgetS = 60.0;
constexpr double kConstantTol = 1e-12;
constexpr double kWarpTol = 1e-9;
constexpr double kRigidTol = 1e-9;
constexpr std::size_t kRigidTrials = 100;
constexpr double kEulerTol = 1e-9;
constexpr std::size_t kEulerTrials = 1000;
constexpr double kEulerMaxPitchDeg = 85.0;
constexpr double kEditorReduction = 10.0;
constexpr double kEditorHeldout = 0.05;
constexpr double kEditorBudgetS = 120.0;
constexpr double kDemoPsnr = 25.0;
constexpr double kDemoBudgetS = 300.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Tensor randn(const Dims& d, std::mt19937_64& rng) {
  Tensor t(d);
  nn::fill_normal(t, 1.0, rng);
  return t;
}

Tensor uniform(const Dims& d, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(d);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

fvr::RenderSample random_sample(std::size_t h, std::size_t w, std::size_t d, std::size_t m,
                                std::mt19937_64& rng) {
  return {uniform({h, w, d, 1}, rng, 0.0, 1.5), randn({h, w, d, m}, rng)};
}

// ---------------------------------------------------------------- 1-7

Outcome conservation() {
  std::mt19937_64 rng(101);
  std::vector<fvr::RenderSample> samples;
  for (std::size_t i = 0; i < kConservationTrials; ++i) samples.push_back(random_sample(8, 8, 16, 3, rng));
  const auto t0 = clock_type::now();
  double worst = 0.0;
  for (const auto& s : samples) {
    const auto r = fvr::composite(s);
    for (std::size_t p = 0; p < 64; ++p) {
      double sum = 0.0, total = 0.0;
      for (std::size_t j = 0; j < 16; ++j) {
        sum += r.alpha[p * 16 + j];
        total += s.p_sigma[p * 16 + j];
      }
      worst = std::max(worst, std::abs(sum - (1.0 - std::exp(-total))));
    }
  }
  const double t = seconds(t0);
  return {worst <= kConservationTol && t < kConservationBudgetS,
          fmt("max |sum alpha - (1 - exp(-sum p))| = %.3g over %zu samples, %.3f s", worst,
              kConservationTrials, t)};
}

Tensor composite_brute_force(const fvr::RenderSample& s) {
  const std::size_t h = s.p_sigma.dim(0), w = s.p_sigma.dim(1), d = s.p_sigma.dim(2),
                    m = s.p_color.dim(3);
  Tensor out({h, w, m});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t j = 0; j < d; ++j) {
        double neg = 0.0;
        for (std::size_t k = 0; k < j; ++k) neg += -s.p_sigma.at(r, c, k, 0);
        const double alpha = std::exp(neg) * (1.0 - std::exp(-s.p_sigma.at(r, c, j, 0)));
        for (std::size_t q = 0; q < m; ++q) out.at(r, c, q) += alpha * s.p_color.at(r, c, j, q);
      }
  return out;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < kOracleTrials; ++i) {
    const auto s = random_sample(dim(rng), dim(rng), dim(rng) + 4, dim(rng), rng);
    if (!(fvr::composite(s).color == composite_brute_force(s))) ++mismatches;
  }
  return {mismatches == 0, fmt("%zu of %zu instances differ bitwise", mismatches, kOracleTrials)};
}

Outcome gradient_suite() {
  harness::GradCheckConfig cfg;
  cfg.trials = kGradTrials;
  const auto t0 = clock_type::now();
  const auto checks = harness::run_gradcheck_suite("all", cfg);
  const double t = seconds(t0);
  const std::set<std::string> required = {"matching_loss", "ray_sample", "composite",
                                          "render_loss", "edit_keypoints", "editor_loss"};
  std::set<std::string> seen;
  bool ok = true;
  std::size_t instances = 0, failures = 0;
  for (const auto& c : checks) {
    seen.insert(c.op);
    ok = ok && c.passed() && c.instances >= kGradTrials;
    instances += c.instances;
    failures += c.failures;
  }
  for (const auto& r : required) ok = ok && seen.count(r);
  return {ok && t < kGradBudgetS,
          fmt("%zu ops, %zu instances, %zu failures, %.2f s", checks.size(), instances, failures, t)};
}

Outcome reference_constants() {
  Tensor fs({2, 2, 2, 3}), fm({2, 2, 2, 1});
  for (std::size_t c = 0; c < 3; ++c) fs.at(0, 0, 0, c) = 1.0 + static_cast<double>(c);
  fm.at(1, 1, 1, 0) = 0.7;
  const double l = fvr::matching_loss(fvr::FeatureVolume(fs), fvr::FeatureVolume(fm),
                                      fvr::kMatchAlpha1, fvr::kMatchAlpha2).loss;
  const fvr::Lattice lat{3, 3, 1};
  const double h = fvr::mesh_heatmap(Vec3(0.1, 0.0, 0.5), lat, fvr::kHeatmapSigma).at(1, 1, 0, 0);
  const double e1 = std::abs(l - 0.1), e2 = std::abs(h - std::exp(-0.5));
  return {e1 <= kConstantTol && e2 <= kConstantTol,
          fmt("matching_loss = %.15f, heatmap(0.1) = %.15f", l, h)};
}

Outcome warp_identities() {
  std::mt19937_64 rng(105);
  const std::size_t h = 9, w = 11;
  const Tensor f = randn({h, w, 4}, rng);
  Tensor ones({h, w, 1});
  ones.fill(1.0);
  const auto grid = CoordGrid::identity(h, w);
  const auto kp = motion2d::KeypointSet::identity_jacobians({{0.1, -0.3}, {-0.4, 0.2}, {0.5, 0.5}});
  const Tensor masks = Tensor({h, w, 4}, 0.25);
  const Tensor dense = motion2d::dense_motion(motion2d::sparse_motion(kp, kp, grid),
                                              motion2d::MaskStack(masks), grid);
  const double id_err = max_abs_diff(motion2d::warp_feature(f, dense, ones), f);
  double shift_err = 0.0;
  for (int dx : {-3, -1, 1, 2, 4}) {
    // Source keypoints displaced by dx columns, all mask weight on the keypoints.
    const motion2d::Vec2 t(2.0 * dx / static_cast<double>(w - 1), 0.0);
    auto src = kp;
    for (auto& p : src.points) p += t;
    Tensor kp_masks({h, w, 4}, 1.0 / 3.0);
    for (std::size_t q = 0; q < h * w; ++q) kp_masks[q * 4] = 0.0;
    const Tensor shifted = motion2d::dense_motion(motion2d::sparse_motion(src, kp, grid),
                                                  motion2d::MaskStack(kp_masks), grid);
    Tensor oracle(f.dims());
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const long sc = std::clamp<long>(static_cast<long>(c) + dx, 0, static_cast<long>(w) - 1);
        for (std::size_t k = 0; k < 4; ++k) oracle.at(r, c, k) = f.at(r, static_cast<std::size_t>(sc), k);
      }
    shift_err = std::max(shift_err, max_abs_diff(motion2d::warp_feature(f, shifted, ones), oracle));
  }
  return {id_err == 0.0 && shift_err <= kWarpTol,
          fmt("identity max err %.3g, integer shift max err %.3g", id_err, shift_err)};
}

Outcome skinning_rigidity() {
  face3d::HeadModel h = face3d::make_desk_head();
  for (std::size_t i = 0; i < h.vertices(); ++i) {
    h.skin_weights.at(0, i) = 1.0;
    for (std::size_t k = 1; k < h.joints(); ++k) h.skin_weights.at(k, i) = 0.0;
  }
  std::mt19937_64 rng(106);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
  auto rotvec = [&] { return Vec3(n01(rng), n01(rng), n01(rng)).normalized() * ang(rng); };
  face3d::FlameParams p = face3d::FlameParams::zeros(h);
  p.shape = {0.4, -0.3};
  p.expression = {0.2, 0.5};
  const auto rest = face3d::blend_skinning(h, p);
  double worst = 0.0;
  for (std::size_t t = 0; t < kRigidTrials; ++t) {
    p.set_rotation(1, rotvec());
    const auto v = face3d::blend_skinning(h, p);
    for (std::size_t i = 0; i < h.vertices(); ++i)
      for (std::size_t j = i + 1; j < h.vertices(); ++j)
        worst = std::max(worst, std::abs((v.vertex(i) - v.vertex(j)).norm() -
                                         (rest.vertex(i) - rest.vertex(j)).norm()));
  }
  return {worst <= kRigidTol, fmt("max pairwise distance change %.3g over %zu rotations", worst, kRigidTrials)};
}

Outcome euler_round_trip() {
  std::mt19937_64 rng(107);
  const double pi = std::numbers::pi, pmax = kEulerMaxPitchDeg * pi / 180.0;
  std::uniform_real_distribution<double> full(-pi, pi), pitch(-pmax, pmax);
  double worst = 0.0;
  for (std::size_t t = 0; t < kEulerTrials; ++t) {
    const Mat3 r = euler_to_matrix({full(rng), pitch(rng), full(rng)});
    const auto e = face3d::euler_extract(matrix_to_axis_angle(r));
    worst = std::max(worst, (euler_to_matrix(e.angles) - r).norm());
  }
  return {worst <= kEulerTol, fmt("max Frobenius error %.3g over %zu rotations", worst, kEulerTrials)};
}

// ---------------------------------------------------------------- 8-11

struct Cli {
  fs::path binary;
  fs::path work;

  int run(const std::string& args, const fs::path& stdout_file = {}, const fs::path& cwd = {}) const {
    std::string cmd = "\"" + binary.string() + "\" " + args;
    if (!cwd.empty()) cmd = "cd \"" + cwd.string() + "\" && " + cmd;
    cmd += stdout_file.empty() ? " > /dev/null" : " > \"" + stdout_file.string() + "\"";
    return std::system(cmd.c_str());
  }
};

Outcome editor_training(const Cli& cli) {
  const fs::path out = cli.work / "fit_editor";
  const auto t0 = clock_type::now();
  const int rc = cli.run("fit-editor --out \"" + out.string() + "\"");
  const double t = seconds(t0);
  if (rc != 0) return {false, fmt("fit-editor exited with %d", rc)};
  const auto rep = harness::read_json(out / "report.json");
  const double reduction = rep["reduction"].get<double>();
  const double heldout = rep["heldout_keypoint_error"].get<double>();
  return {reduction >= kEditorReduction && heldout < kEditorHeldout && t < kEditorBudgetS,
          fmt("L_editor reduced %.1fx, held-out error %.4f, %.1f s", reduction, heldout, t)};
}

Outcome end_to_end_demo(const Cli& cli) {
  const fs::path out = cli.work / "demo";
  const auto t0 = clock_type::now();
  const int rc = cli.run("demo --out \"" + out.string() + "\"");
  const double t = seconds(t0);
  if (rc != 0) return {false, fmt("demo exited with %d", rc)};
  const auto rep = harness::read_json(out / "report.json");
  const double psnr = rep["metrics"]["psnr"].get<double>();
  const std::size_t steps = rep["steps"].get<std::size_t>();
  return {psnr >= kDemoPsnr && steps == 500 && t < kDemoBudgetS,
          fmt("PSNR %.2f dB after %zu steps, %.1f s", psnr, steps, t)};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream is(p);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

Outcome sampling_bench(const Cli& cli) {
  const fs::path csv = cli.work / "bench.csv";
  const int rc = cli.run("bench --depth 16 --out \"" + csv.string() + "\"");
  if (rc != 0) return {false, fmt("bench exited with %d", rc)};
  const auto rows = read_csv(csv);
  if (rows.size() != 4 || rows[1].size() != 4 || rows[2].size() != 4 || rows[3].size() != 4) {
    return {false, "unexpected CSV layout"};
  }
  const long one = std::stol(rows[1][1]), two = std::stol(rows[2][1]);
  const double ratio = std::stod(rows[3][3]);
  return {one == 16 && two == 24 && ratio > 1.0,
          fmt("%ld vs %ld evaluations per pixel, throughput ratio %.3f", one, two, ratio)};
}

// Every file under `dir` except timing records.
std::vector<fs::path> outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "timing.json") {
      files.push_back(fs::relative(e.path(), dir));
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  const auto fa = outputs(a), fb = outputs(b);
  if (fa != fb) {
    why = "file sets differ under " + a.filename().string();
    return false;
  }
  for (const auto& f : fa) {
    if (slurp(a / f) != slurp(b / f)) {
      why = (a.filename() / f).string() + " differs";
      return false;
    }
  }
  return true;
}

// Bench CSV without the timing columns.
std::string bench_counts(const fs::path& csv) {
  std::string s;
  for (const auto& row : read_csv(csv)) {
    if (row.empty() || row[0] == "throughput_ratio") continue;
    for (std::size_t i = 0; i < row.size() && i < 3; ++i) s += row[i] + ",";
    s += "\n";
  }
  return s;
}

Outcome determinism(const Cli& cli) {
  const fs::path root = cli.work / "determinism";
  std::string why;
  for (int run = 0; run < 2; ++run) {
    const fs::path d = root / ("run" + std::to_string(run));
    fs::create_directories(d);
    // Identical relative command lines in each run directory.
    const std::vector<std::pair<std::string, std::string>> cmds = {
        {"demo", "demo --size 16x16 --steps 20 --seed 3 --out demo"},
        {"fit-editor", "fit-editor --steps 50 --train 32 --test 16 --seed 3 --out fit"},
        {"edit", "edit --yaw 10 --pitch -5 --roll 3 --size 16x16 --seed 3 "
                 "--editor fit/editor.fnvt --model demo/model.fnvt --out edit"},
        {"gradcheck", "gradcheck --module all --trials 3 --seed 3 --out gradcheck.json"},
        {"bench", "bench --size 8x8 --trials 10 --seed 3 --out bench.csv"},
        {"metrics", "metrics --a demo/render.ppm --b demo/target.ppm"},
    };
    for (const auto& [name, args] : cmds) {
      const fs::path out = name == "metrics" ? d / "metrics.txt" : fs::path{};
      const int rc = cli.run(args, out, d);
      if (rc != 0) return {false, name + " exited with " + std::to_string(rc)};
    }
  }
  const fs::path a = root / "run0", b = root / "run1";
  for (const char* sub : {"demo", "fit", "edit"}) {
    if (!same_tree(a / sub, b / sub, why)) return {false, why};
  }
  for (const char* f : {"gradcheck.json", "metrics.txt"}) {
    if (slurp(a / f) != slurp(b / f)) return {false, std::string(f) + " differs"};
  }
  if (bench_counts(a / "bench.csv") != bench_counts(b / "bench.csv")) {
    return {false, "bench evaluation counts differ"};
  }
  return {true, "demo, fit-editor, edit, gradcheck, metrics byte-identical; bench counts identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fnevr acceptance checks"};
  Cli cli;
  std::vector<int> only;
  app.add_option("--cli", cli.binary, "path to the fnevr binary")->required()->check(CLI::ExistingFile);
  app.add_option("--work", cli.work, "scratch directory for command outputs")->required();
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  cli.binary = fs::absolute(cli.binary);
  cli.work = fs::absolute(cli.work);
  fs::remove_all(cli.work);
  fs::create_directories(cli.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"compositing conservation", conservation},
      {"compositing oracle equivalence", oracle_equivalence},
      {"gradient suite", gradient_suite},
      {"reference constants", reference_constants},
      {"warping identities", warp_identities},
      {"blend-skinning rigidity", skinning_rigidity},
      {"euler round trip", euler_round_trip},
      {"editor training", [&] { return editor_training(cli); }},
      {"end-to-end demo", [&] { return end_to_end_demo(cli); }},
      {"sampling benchmark", [&] { return sampling_bench(cli); }},
      {"determinism", [&] { return determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %-32s %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
