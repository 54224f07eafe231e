#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rrn/changedet.hpp"
#include "rrn/em_engine.hpp"
#include "rrn/metrics.hpp"
#include "rrn/raster.hpp"
#include "rrn/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) rrn::fail(rrn::ErrorKind::IoError, "cannot open " + tmp);
    f << content;
    if (!f) rrn::fail(rrn::ErrorKind::IoError, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) rrn::fail(rrn::ErrorKind::IoError, "rename failed: " + ec.message());
}

void write_manifest(const std::string& base, const json& manifest) {
  if (base.empty()) return;
  write_text_atomic(base + ".manifest.json", manifest.dump(2) + "\n");
}

rrn::Raster read_input_raster(const std::string& path) {
  if (!fs::exists(path))
    rrn::fail(rrn::ErrorKind::InputNotFound, "no such file: " + path);
  return rrn::read_raster(path);
}

std::string with_method_suffix(const std::string& path,
                               const std::string& slug) {
  const fs::path p(path);
  fs::path out = p.parent_path() / p.stem();
  out += "." + slug;
  out += p.extension();
  return out.string();
}

std::string method_slug(rrn::Method m) {
  std::string s = rrn::method_name(m);
  for (char& c : s) c = static_cast<char>(std::tolower(c));
  return s;
}

// ---------------------------------------------------------------------------
// normalize

struct NormalizeArgs {
  std::string source, target, method = "hm-mog";
  std::string out, mask_out, mapping_out, report_out, csv_out;
  int t_max = 255;
  double delta = 1e-4;
  int max_iters = 10;
  std::string subsample = "100000";
  std::uint64_t seed = 0;
  double gamma_threshold = 0.5;
};

int cmd_normalize(const NormalizeArgs& a, int threads) {
  std::vector<rrn::Method> methods;
  if (a.method == "all") {
    methods = {rrn::Method::LRrn, rrn::Method::HmRrn, rrn::Method::LRrnMog,
               rrn::Method::HmRrnMol, rrn::Method::HmRrnMog};
  } else {
    const auto m = rrn::parse_method(a.method);
    if (!m)
      rrn::fail(rrn::ErrorKind::InvalidArgument,
                "unknown method: " + a.method);
    methods = {*m};
  }

  rrn::EmConfig base;
  base.delta = a.delta;
  base.max_iters = a.max_iters;
  base.seed = a.seed;
  base.gamma_threshold = a.gamma_threshold;
  if (a.subsample == "full") {
    base.subsample_size = 0;
  } else {
    try {
      base.subsample_size = std::stoull(a.subsample);
    } catch (const std::exception&) {
      rrn::fail(rrn::ErrorKind::InvalidArgument,
                "subsample must be a number or 'full'");
    }
  }

  rrn::RasterPair pair =
      rrn::make_raster_pair(read_input_raster(a.source),
                            read_input_raster(a.target));
  // one quantization and overlap set shared across methods
  const auto src_spec = rrn::quantization_spec(pair.source, pair.valid, a.t_max);
  const auto tgt_spec = rrn::quantization_spec(pair.target, pair.valid, a.t_max);
  if (src_spec.any_constant() || tgt_spec.any_constant())
    std::cerr << "{\"warning\":\"constant band detected; coded as zeros\"}\n";
  const rrn::Raster src_codes = rrn::quantize(pair.source, src_spec);
  const rrn::Raster tgt_codes = rrn::quantize(pair.target, tgt_spec);
  const rrn::RasterPair coded{src_codes, tgt_codes, pair.valid};

  const bool many = methods.size() > 1;
  for (const rrn::Method m : methods) {
    rrn::EmConfig cfg = base;
    cfg.method = m;
    cfg.validate();
    const rrn::FitResult fit = rrn::run(coded, a.t_max, cfg, threads);
    const std::string slug = method_slug(m);

    json outputs = json::object();
    if (!a.out.empty()) {
      const std::string path = many ? with_method_suffix(a.out, slug) : a.out;
      const rrn::Raster mapped =
          rrn::apply_mapping(fit.mapping, src_codes, a.t_max, threads);
      rrn::Raster normalized =
          rrn::raster_cast(rrn::dequantize(mapped, tgt_spec),
                           pair.target.dtype());
      if (pair.target.nodata()) {
        normalized.set_nodata(pair.target.nodata());
        for (std::size_t p = 0; p < normalized.pixels(); ++p)
          if (!pair.valid.get(p))
            for (int b = 0; b < normalized.bands(); ++b)
              normalized.set(b, p, *pair.target.nodata());
      }
      rrn::write_raster(normalized, path);
      outputs["normalized"] = path;
    }
    if (!a.mask_out.empty()) {
      const std::string path =
          many ? with_method_suffix(a.mask_out, slug) : a.mask_out;
      rrn::write_raster(fit.nc_mask.mask.to_raster(), path);
      outputs["nc_mask"] = path;
    }
    if (!a.mapping_out.empty()) {
      const std::string path =
          many ? with_method_suffix(a.mapping_out, slug) : a.mapping_out;
      write_text_atomic(path, fit.mapping.to_json().dump(2) + "\n");
      outputs["mapping"] = path;
    }
    const json report = fit.report();
    if (!a.report_out.empty()) {
      const std::string path =
          many ? with_method_suffix(a.report_out, slug) : a.report_out;
      write_text_atomic(path, report.dump(2) + "\n");
      outputs["report"] = path;
    }
    std::cout << report.dump() << "\n";

    json manifest{{"command", "normalize"},
                  {"inputs", {{"source", a.source}, {"target", a.target}}},
                  {"method", rrn::method_name(m)},
                  {"config",
                   {{"delta", cfg.delta},
                    {"max_iters", cfg.max_iters},
                    {"subsample_size", cfg.subsample_size},
                    {"seed", cfg.seed},
                    {"gamma_threshold", cfg.gamma_threshold},
                    {"t_max", a.t_max},
                    {"threads", threads}}},
                  {"outputs", outputs}};
    std::string base_path = !a.out.empty() ? a.out : a.report_out;
    if (!base_path.empty() && many)
      base_path = with_method_suffix(base_path, slug);
    write_manifest(base_path, manifest);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
  std::string source, target, normalized, mask;
  std::string report_out, csv_out, run_report;
  int band_b = -2, band_g = -2, band_r = -2, band_n = -2;  // -2 = auto
};

int cmd_metrics(const MetricsArgs& a) {
  rrn::RasterPair pair =
      rrn::make_raster_pair(read_input_raster(a.source),
                            read_input_raster(a.target));
  const rrn::Raster normalized = read_input_raster(a.normalized);
  rrn::Mask mask = rrn::Mask::from_raster(read_input_raster(a.mask));
  if (mask.width() != pair.source.width() ||
      mask.height() != pair.source.height())
    rrn::fail(rrn::ErrorKind::InvalidArgument, "mask shape mismatch");
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (!pair.valid.get(p)) mask.set(p, false);

  const int bands = pair.source.bands();
  auto resolve_role = [&](int flag, int auto_idx) {
    if (flag == -2) return auto_idx < bands ? auto_idx : -1;
    if (flag >= bands)
      rrn::fail(rrn::ErrorKind::InvalidArgument, "band role out of range");
    return flag;
  };
  rrn::BandRoles roles;
  roles.blue = resolve_role(a.band_b, 0);
  roles.green = resolve_role(a.band_g, 1);
  roles.red = resolve_role(a.band_r, 2);
  roles.nir = resolve_role(a.band_n, 3);

  rrn::NoChangeMask nc;
  nc.ncr = static_cast<double>(mask.count()) /
           static_cast<double>(pair.valid.count());
  nc.mask = std::move(mask);

  rrn::EvalReport rep = rrn::evaluate_pair(pair, normalized, nc, roles);
  if (!a.run_report.empty()) {
    std::ifstream f(a.run_report);
    if (!f)
      rrn::fail(rrn::ErrorKind::InputNotFound,
                "no such file: " + a.run_report);
    json run = json::parse(f);
    rep.method = run.value("method", "");
    if (run.contains("mll")) rep.mll = run["mll"].get<double>();
  }

  const json out = rep.to_json();
  if (!a.report_out.empty()) write_text_atomic(a.report_out, out.dump(2) + "\n");
  if (!a.csv_out.empty()) {
    std::string content;
    if (fs::exists(a.csv_out)) {
      std::ifstream f(a.csv_out);
      content.assign((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    } else {
      content = rrn::EvalReport::csv_header() + "\n";
    }
    content += rep.csv_row() + "\n";
    write_text_atomic(a.csv_out, content);
  }
  std::cout << out.dump() << "\n";

  json manifest{{"command", "metrics"},
                {"inputs",
                 {{"source", a.source},
                  {"target", a.target},
                  {"normalized", a.normalized},
                  {"mask", a.mask}}},
                {"outputs",
                 {{"report", a.report_out}, {"csv", a.csv_out}}}};
  write_manifest(a.report_out, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// changedet

struct ChangedetArgs {
  std::string source_pred, target_pred, nc_mask, truth;
  std::string mode = "all";
  double ratio = 0.8;
  int window = 31;
  double vote = 0.7;
  std::string out_prefix, scores_out;
};

int cmd_changedet(const ChangedetArgs& a) {
  rrn::ClassMaskPair masks;
  masks.source_pred = rrn::Mask::from_raster(read_input_raster(a.source_pred));
  masks.target_pred = rrn::Mask::from_raster(read_input_raster(a.target_pred));
  if (!a.truth.empty())
    masks.truth = rrn::Mask::from_raster(read_input_raster(a.truth));

  std::optional<rrn::Mask> nc;
  if (!a.nc_mask.empty())
    nc = rrn::Mask::from_raster(read_input_raster(a.nc_mask));

  std::vector<std::string> modes;
  if (a.mode == "all") {
    modes = {"diff", "exclude", "component-vote", "window-vote"};
  } else {
    modes = {a.mode};
  }

  auto need_nc = [&]() -> const rrn::Mask& {
    if (!nc)
      rrn::fail(rrn::ErrorKind::InvalidArgument,
                "this mode requires --nc-mask");
    return *nc;
  };

  json rows = json::array();
  for (const std::string& mode : modes) {
    rrn::ChangeResult res;
    if (mode == "diff") {
      res = rrn::direct_difference(masks);
    } else if (mode == "exclude") {
      res = rrn::difference_excluding_nc(masks, need_nc());
    } else if (mode == "component-vote") {
      res = rrn::component_vote(masks, need_nc(), a.ratio);
    } else if (mode == "window-vote") {
      res = rrn::windowed_vote_difference(masks, need_nc(), a.window, a.window,
                                          a.vote);
    } else {
      rrn::fail(rrn::ErrorKind::InvalidArgument, "unknown mode: " + mode);
    }
    json row{{"strategy", res.strategy},
             {"change_pixels", res.change.count()}};
    if (res.scores) row["scores"] = res.scores->to_json();
    rows.push_back(row);
    std::cout << row.dump() << "\n";
    if (!a.out_prefix.empty())
      rrn::write_raster(res.change.to_raster(),
                        a.out_prefix + res.strategy + ".rrnr");
  }
  if (!a.scores_out.empty())
    write_text_atomic(a.scores_out, rows.dump(2) + "\n");

  json manifest{{"command", "changedet"},
                {"inputs",
                 {{"source_pred", a.source_pred},
                  {"target_pred", a.target_pred},
                  {"nc_mask", a.nc_mask},
                  {"truth", a.truth}}},
                {"options",
                 {{"mode", a.mode},
                  {"ratio", a.ratio},
                  {"window", a.window},
                  {"vote", a.vote}}}};
  write_manifest(a.scores_out, manifest);
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out_dir;
  int width = 128, height = 128, bands = 3, t_max = 255;
  double change_fraction = 0.2;
  std::string change_kind = "cloud-blobs";
  double sigma_nc = 2.0, sigma_change = 8.0;
  std::uint64_t seed = 1;
  std::string mapping = "gamma";
  std::vector<double> gamma;
  std::vector<double> affine_w, affine_b;
};

int cmd_synth(const SynthArgs& a) {
  rrn::SceneSpec spec;
  spec.width = a.width;
  spec.height = a.height;
  spec.bands = a.bands;
  spec.t_max = a.t_max;
  spec.change_fraction = a.change_fraction;
  const auto kind = rrn::parse_change_kind(a.change_kind);
  if (!kind)
    rrn::fail(rrn::ErrorKind::InvalidArgument,
              "unknown change kind: " + a.change_kind);
  spec.change_kind = *kind;
  spec.noise_sigma_nc = a.sigma_nc;
  spec.noise_sigma_change = a.sigma_change;
  spec.seed = a.seed;
  if (a.mapping == "affine") {
    spec.affine_mapping = true;
    if (a.affine_w.size() != a.affine_b.size() || a.affine_w.empty())
      rrn::fail(rrn::ErrorKind::InvalidArgument,
                "--affine-w and --affine-b need matching non-empty lists");
    for (std::size_t i = 0; i < a.affine_w.size(); ++i)
      spec.affine.push_back({a.affine_w[i], a.affine_b[i]});
  } else if (a.mapping == "gamma") {
    if (!a.gamma.empty()) spec.gamma = a.gamma;
  } else {
    rrn::fail(rrn::ErrorKind::InvalidArgument,
              "mapping must be 'gamma' or 'affine'");
  }
  spec.validate();

  fs::create_directories(a.out_dir);
  const rrn::Scene scene = rrn::generate(spec);
  const fs::path dir(a.out_dir);
  rrn::write_raster(scene.pair.source, (dir / "source.rrnr").string());
  rrn::write_raster(scene.pair.target, (dir / "target.rrnr").string());
  rrn::write_raster(scene.truth.nc_mask.to_raster(),
                    (dir / "truth_nc_mask.rrnr").string());
  write_text_atomic((dir / "truth_mapping.json").string(),
                    scene.truth.mapping.to_json().dump(2) + "\n");

  const double nc_fraction =
      static_cast<double>(scene.truth.nc_mask.count()) /
      static_cast<double>(scene.truth.nc_mask.size());
  json manifest{{"command", "synth"},
                {"spec",
                 {{"width", spec.width},
                  {"height", spec.height},
                  {"bands", spec.bands},
                  {"t_max", spec.t_max},
                  {"change_fraction", spec.change_fraction},
                  {"change_kind", rrn::change_kind_name(spec.change_kind)},
                  {"sigma_nc", spec.noise_sigma_nc},
                  {"sigma_change", spec.noise_sigma_change},
                  {"mapping", a.mapping},
                  {"seed", spec.seed}}},
                {"outputs",
                 {{"source", (dir / "source.rrnr").string()},
                  {"target", (dir / "target.rrnr").string()},
                  {"truth_nc_mask", (dir / "truth_nc_mask.rrnr").string()},
                  {"truth_mapping", (dir / "truth_mapping.json").string()}}},
                {"nc_fraction", nc_fraction}};
  write_text_atomic((dir / "manifest.json").string(), manifest.dump(2) + "\n");
  std::cout << json{{"out_dir", a.out_dir}, {"nc_fraction", nc_fraction}}.dump()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// config file: flat global keys plus one section per subcommand; command-line
// flags always win over config values.

std::vector<std::string> inject_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path, active_sub;
  const std::vector<std::string> subcommands{"normalize", "metrics",
                                             "changedet", "synth"};
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(9);
    else if (active_sub.empty() &&
             std::find(subcommands.begin(), subcommands.end(), args[i]) !=
                 subcommands.end())
      active_sub = args[i];
  }
  if (config_path.empty()) return args;

  std::ifstream f(config_path);
  if (!f)
    rrn::fail(rrn::ErrorKind::InputNotFound, "no such file: " + config_path);
  json cfg = json::parse(f);
  if (!cfg.is_object())
    rrn::fail(rrn::ErrorKind::InvalidArgument, "config must be a JSON object");

  auto has_flag = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  auto inject = [&](const std::string& key, const json& v) {
    if (key == "config" || has_flag(key)) return;
    args.push_back("--" + key);
    args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  };
  for (const auto& [key, value] : cfg.items()) {
    if (value.is_object()) {
      if (key == active_sub)
        for (const auto& [k, v] : value.items()) inject(k, v);
    } else {
      inject(key, value);
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust relative radiometric normalization of raster pairs"};
  app.require_subcommand(1);

  int threads = 0;
  std::string config_path;
  app.add_option("--threads", threads, "worker threads (0 = auto)");
  app.add_option("--config", config_path, "JSON config file");

  NormalizeArgs na;
  auto* norm = app.add_subcommand("normalize",
                                  "fit a normalization mapping and no-change mask");
  norm->fallthrough();
  norm->add_option("--source", na.source, "source raster (RRNR)")->required();
  norm->add_option("--target", na.target, "target raster (RRNR)")->required();
  norm->add_option("--method", na.method,
                   "l-rrn | hm-rrn | l-mog | hm-mol | hm-mog | all");
  norm->add_option("--out", na.out, "normalized source raster path");
  norm->add_option("--mask-out", na.mask_out, "no-change mask path");
  norm->add_option("--mapping-out", na.mapping_out, "fitted mapping JSON path");
  norm->add_option("--report", na.report_out, "run report JSON path");
  norm->add_option("--t-max", na.t_max, "working domain upper code");
  norm->add_option("--delta", na.delta, "mean log-likelihood tolerance");
  norm->add_option("--max-iters", na.max_iters, "stochastic iteration cap");
  norm->add_option("--subsample", na.subsample, "pixels per iteration or 'full'");
  norm->add_option("--seed", na.seed, "subsampling seed");
  norm->add_option("--gamma-threshold", na.gamma_threshold,
                   "no-change posterior cutoff");

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "before/after evaluation report");
  met->fallthrough();
  met->add_option("--source", ma.source)->required();
  met->add_option("--target", ma.target)->required();
  met->add_option("--normalized", ma.normalized)->required();
  met->add_option("--mask", ma.mask, "no-change mask (RRNR)")->required();
  met->add_option("--report", ma.report_out, "report JSON path");
  met->add_option("--csv", ma.csv_out, "CSV path (row appended)");
  met->add_option("--run-report", ma.run_report,
                  "normalize report to copy method/mll from");
  met->add_option("--band-b", ma.band_b, "blue band index");
  met->add_option("--band-g", ma.band_g, "green band index");
  met->add_option("--band-r", ma.band_r, "red band index");
  met->add_option("--band-n", ma.band_n, "NIR band index");

  ChangedetArgs ca;
  auto* chg = app.add_subcommand("changedet",
                                 "fuse class masks with the no-change set");
  chg->fallthrough();
  chg->add_option("--source-pred", ca.source_pred)->required();
  chg->add_option("--target-pred", ca.target_pred)->required();
  chg->add_option("--nc-mask", ca.nc_mask, "no-change mask (RRNR)");
  chg->add_option("--truth", ca.truth, "ground-truth change mask");
  chg->add_option("--mode", ca.mode,
                  "diff | exclude | component-vote | window-vote | all");
  chg->add_option("--ratio", ca.ratio, "component vote threshold");
  chg->add_option("--window", ca.window, "vote window size (odd)");
  chg->add_option("--vote", ca.vote, "window vote threshold");
  chg->add_option("--out-prefix", ca.out_prefix, "write change masks here");
  chg->add_option("--scores", ca.scores_out, "scores JSON path");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "generate a synthetic scene");
  syn->fallthrough();
  syn->add_option("--out-dir", sa.out_dir)->required();
  syn->add_option("--width", sa.width);
  syn->add_option("--height", sa.height);
  syn->add_option("--bands", sa.bands);
  syn->add_option("--t-max", sa.t_max);
  syn->add_option("--change-fraction", sa.change_fraction);
  syn->add_option("--change-kind", sa.change_kind,
                  "cloud-blobs | random-replacement | landcover-patches");
  syn->add_option("--sigma-nc", sa.sigma_nc);
  syn->add_option("--sigma-change", sa.sigma_change);
  syn->add_option("--seed", sa.seed);
  syn->add_option("--mapping", sa.mapping, "gamma | affine");
  syn->add_option("--gamma", sa.gamma, "per-band gamma exponents");
  syn->add_option("--affine-w", sa.affine_w, "per-band affine slopes");
  syn->add_option("--affine-b", sa.affine_b, "per-band affine offsets");

  try {
    const std::vector<std::string> args = inject_config(argc, argv);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    if (norm->parsed()) return cmd_normalize(na, threads);
    if (met->parsed()) return cmd_metrics(ma);
    if (chg->parsed()) return cmd_changedet(ca);
    if (syn->parsed()) return cmd_synth(sa);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << json{{"error", "Usage"}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const rrn::Error& e) {
    std::cerr << json{{"error", rrn::error_kind_name(e.kind())},
                      {"message", e.what()}}
                     .dump()
              << "\n";
    return e.kind() == rrn::ErrorKind::NumericFailure ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump()
              << "\n";
    return 3;
  }
}
