// Command-line pipeline: dataset generation, training, upsampling and
// evaluation with machine-readable JSON reports.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadpu/config.hpp"
#include "cadpu/dataset.hpp"
#include "cadpu/errors.hpp"
#include "cadpu/metrics.hpp"
#include "cadpu/model.hpp"
#include "cadpu/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cadpu;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  in >> j;
  return j;
}

TriMesh load_object(const std::string& spec_str) {
  if (spec_str.size() > 4 && spec_str.substr(spec_str.size() - 4) == ".ply")
    return read_ply(spec_str).mesh();
  return builtin_fixture(spec_str);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

void save_dataset(const std::string& dir, const std::vector<TrainPair>& pairs,
                  const std::string& source_name, std::uint64_t source_seed,
                  json& manifest_pairs) {
  for (const auto& pair : pairs) {
    const std::string id = source_name + "_" + pair.patch_id;
    const std::string in_name = id + "_input.xyz";
    const std::string tgt_name = id + "_target.xyz";
    write_xyz((fs::path(dir) / in_name).string(), pair.input);
    write_xyz((fs::path(dir) / tgt_name).string(), pair.target);
    json e;
    e["id"] = id;
    e["input"] = in_name;
    e["target"] = tgt_name;
    e["seed"] = source_seed;
    e["center"] = {pair.center.x, pair.center.y, pair.center.z};
    e["scale"] = pair.scale;
    e["n_in"] = pair.input.size();
    e["r"] = pair.target.size() / pair.input.size();
    manifest_pairs.push_back(e);
  }
}

std::vector<TrainPair> load_dataset(const std::string& dir) {
  const json manifest = load_json((fs::path(dir) / "manifest.json").string());
  std::vector<TrainPair> pairs;
  for (const auto& e : manifest.at("pairs")) {
    TrainPair p;
    p.patch_id = e.at("id").get<std::string>();
    p.input = read_xyz((fs::path(dir) / e.at("input").get<std::string>()).string());
    p.target = read_xyz((fs::path(dir) / e.at("target").get<std::string>()).string());
    const auto& c = e.at("center");
    p.center = Vec3{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    p.scale = e.at("scale").get<double>();
    if (!p.target.has_normals())
      throw DataError("dataset pair " + p.patch_id + ": target lacks normals");
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw DataError("dataset " + dir + " has no pairs");
  return pairs;
}

PointCloud upsample_clustered(const PointCloud& input, const ParamSet& gen,
                              const TrainConfig& cfg, std::size_t patches,
                              std::uint64_t seed) {
  if (patches == 0) {
    if (input.size() % cfg.n_in != 0)
      throw DataError("input size " + std::to_string(input.size()) +
                      " is not a multiple of n_in " + std::to_string(cfg.n_in) +
                      "; pass --patches or resample the input");
    patches = input.size() / cfg.n_in;
  }
  if (input.size() != patches * cfg.n_in) {
    const std::string hint =
        (input.size() % cfg.n_in == 0)
            ? " (valid: --patches " + std::to_string(input.size() / cfg.n_in) + ")"
            : "";
    throw DataError("input size " + std::to_string(input.size()) +
                    " != patches * n_in = " + std::to_string(patches * cfg.n_in) +
                    hint);
  }
  const auto patch_indices = cluster_into_patches(input, patches, seed);
  PointCloud out;
  out.points.reserve(input.size() * cfg.r);
  for (std::size_t p = 0; p < patch_indices.size(); ++p) {
    const PointCloud patch = input.subset(patch_indices[p]);
    const PointCloud up = upsample(patch, gen, cfg, derive_seed(seed, 9000 + p));
    out.points.insert(out.points.end(), up.points.begin(), up.points.end());
  }
  return out;
}

json eval_entry(const std::string& name, const PointCloud& pred,
                const PointCloud& ref) {
  const double cd = chamfer(pred, ref);
  const double hd = hausdorff(pred, ref);
  json e;
  e["name"] = name;
  e["cd_x1e3"] = cd * 1e3;
  e["hd_x1e3"] = hd * 1e3;
  return e;
}

json make_report(const std::string& kind, const json& objects,
                 const TrainConfig& cfg, std::uint64_t seed) {
  double cd = 0.0, hd = 0.0;
  for (const auto& e : objects) {
    cd += e.at("cd_x1e3").get<double>();
    hd += e.at("hd_x1e3").get<double>();
  }
  json report;
  report["kind"] = kind;
  report["mode"] = "direct point-set CD/HD (no surface reconstruction)";
  report["units"] = "x1e-3";
  report["seed"] = seed;
  report["objects"] = objects;
  report["aggregate"]["cd_x1e3"] = cd / objects.size();
  report["aggregate"]["hd_x1e3"] = hd / objects.size();
  report["config"] = cfg.to_text();
  return report;
}

void print_report(const json& report, double wall_s) {
  std::printf("%-24s %12s %12s\n", "object", "CD(1e-3)", "HD(1e-3)");
  for (const auto& e : report.at("objects")) {
    std::printf("%-24s %12.4f %12.4f\n", e.at("name").get<std::string>().c_str(),
                e.at("cd_x1e3").get<double>(), e.at("hd_x1e3").get<double>());
  }
  std::printf("%-24s %12.4f %12.4f\n", "mean",
              report.at("aggregate").at("cd_x1e3").get<double>(),
              report.at("aggregate").at("hd_x1e3").get<double>());
  std::fprintf(stderr, "[%s] wall time %.2f s\n",
               report.at("kind").get<std::string>().c_str(), wall_s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAD-PU point-set upsampling toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--config", config_path, "config file (key=value lines)");
  app.add_option("--seed", seed, "seed overriding the config seed")
      ->each([&](const std::string&) { seed_given = true; });

  auto load_cfg = [&]() {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::load(config_path);
    if (seed_given) cfg.seed = seed;
    return cfg;
  };

  // --- make-dataset ---
  auto* mk = app.add_subcommand("make-dataset", "build training pairs from meshes");
  mk->fallthrough();
  std::vector<std::string> mk_fixtures, mk_meshes;
  std::string mk_out;
  mk->add_option("--fixtures", mk_fixtures,
                 "builtin fixture names (sphere, cylinder, saddle, cube, plane)")
      ->delimiter(',');
  mk->add_option("--mesh", mk_meshes, "ascii PLY mesh paths");
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    std::vector<std::string> sources = mk_fixtures;
    sources.insert(sources.end(), mk_meshes.begin(), mk_meshes.end());
    if (sources.empty())
      throw CLI::ValidationError("make-dataset", "no fixtures or meshes given");
    fs::create_directories(mk_out);
    json manifest_pairs = json::array();
    std::size_t failures = 0;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const std::uint64_t src_seed = derive_seed(cfg.seed, s);
      try {
        const TriMesh mesh = load_object(sources[s]);
        const std::string name = fs::path(sources[s]).stem().string();
        const auto pairs =
            make_train_pairs(mesh, cfg.patches, cfg.n_in, cfg.r, src_seed, cfg.k,
                             cfg.epsilon, cfg.dense_total);
        save_dataset(mk_out, pairs, name, src_seed, manifest_pairs);
        std::fprintf(stderr, "[make-dataset] %s: %zu pairs\n", sources[s].c_str(),
                     pairs.size());
      } catch (const std::exception& e) {
        std::fprintf(stderr, "[make-dataset] %s failed: %s\n", sources[s].c_str(),
                     e.what());
        ++failures;
      }
    }
    json manifest;
    manifest["pairs"] = manifest_pairs;
    manifest["seed"] = cfg.seed;
    manifest["config"] = cfg.to_text();
    write_json((fs::path(mk_out) / "manifest.json").string(), manifest);
    std::fprintf(stderr, "[make-dataset] wrote %zu pairs to %s in %.2f s\n",
                 static_cast<std::size_t>(manifest_pairs.size()), mk_out.c_str(),
                 timer.seconds());
    if (failures > 0) throw DataError(std::to_string(failures) + " source(s) failed");
  });

  // --- train ---
  auto* tr = app.add_subcommand("train", "train on a generated dataset");
  tr->fallthrough();
  std::string tr_data, tr_out, tr_resume, tr_log;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output checkpoint path")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");
  tr->add_option("--log", tr_log, "per-epoch JSON log path");
  tr->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    const auto pairs = load_dataset(tr_data);
    TrainState resume_state;
    const TrainState* resume = nullptr;
    if (!tr_resume.empty()) {
      resume_state = unpack_train_state(load_checkpoint(tr_resume), cfg);
      resume = &resume_state;
    }
    const TrainResult result = train(pairs, cfg, resume);
    save_checkpoint(tr_out, pack_train_state(result.state));

    json log = json::array();
    for (std::size_t e = 0; e < result.log.size(); ++e) {
      const auto& l = result.log[e];
      json entry;
      entry["epoch"] = e + 1;
      entry["emd"] = l.emd;
      entry["regularizer"] = l.reg;
      entry["adv_g"] = l.adv_g;
      entry["adv_d"] = l.adv_d;
      entry["val_cd"] = l.val_cd;
      log.push_back(entry);
      std::fprintf(stderr,
                   "[train] epoch %zu emd %.5f reg %.5f adv_g %.6f adv_d %.5f "
                   "val_cd %.5f\n",
                   e + 1, l.emd, l.reg, l.adv_g, l.adv_d, l.val_cd);
    }
    if (!tr_log.empty()) {
      json j;
      j["epochs"] = log;
      j["global_step"] = result.state.global_step;
      j["generator_params"] = param_count(result.state.gen);
      j["discriminator_params"] = param_count(result.state.dis);
      j["config"] = cfg.to_text();
      write_json(tr_log, j);
    }
    std::fprintf(stderr, "[train] %zu epochs, step %lld, %.2f s, checkpoint %s\n",
                 result.log.size(), static_cast<long long>(result.state.global_step),
                 timer.seconds(), tr_out.c_str());
  });

  // --- upsample ---
  auto* up = app.add_subcommand("upsample", "upsample an input cloud");
  up->fallthrough();
  std::string up_in, up_ckpt, up_out;
  std::size_t up_patches = 0;
  up->add_option("--input", up_in, "input .xyz")->required();
  up->add_option("--checkpoint", up_ckpt, "trained checkpoint")->required();
  up->add_option("--out", up_out, "output .xyz")->required();
  up->add_option("--patches", up_patches, "patch count (default: size / n_in)");
  up->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    const PointCloud input = read_xyz(up_in);
    const TrainState st = unpack_train_state(load_checkpoint(up_ckpt), cfg);
    const PointCloud out =
        upsample_clustered(input, st.gen, cfg, up_patches, cfg.seed);
    write_xyz(up_out, out);
    std::fprintf(stderr, "[upsample] %zu -> %zu points in %.2f s\n", input.size(),
                 out.size(), timer.seconds());
  });

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "Chamfer/Hausdorff against a reference");
  ev->fallthrough();
  std::string ev_pred, ev_ref, ev_out;
  ev->add_option("--pred", ev_pred, "predicted .xyz")->required();
  ev->add_option("--ref", ev_ref, "reference .xyz")->required();
  ev->add_option("--out", ev_out, "report JSON path");
  ev->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    const PointCloud pred = read_xyz(ev_pred);
    const PointCloud ref = read_xyz(ev_ref);
    json objects = json::array();
    objects.push_back(eval_entry(fs::path(ev_pred).stem().string(), pred, ref));
    const json report = make_report("eval", objects, cfg, cfg.seed);
    print_report(report, timer.seconds());
    if (!ev_out.empty()) write_json(ev_out, report);
  });

  // --- noise-sweep ---
  auto* ns = app.add_subcommand("noise-sweep",
                                "evaluate robustness across noise levels");
  ns->fallthrough();
  std::string ns_in, ns_ref, ns_ckpt, ns_out;
  std::string ns_stds = "0,0.001,0.005,0.01,0.02";
  std::size_t ns_patches = 0;
  ns->add_option("--input", ns_in, "clean input .xyz")->required();
  ns->add_option("--ref", ns_ref, "reference .xyz")->required();
  ns->add_option("--checkpoint", ns_ckpt, "trained checkpoint")->required();
  ns->add_option("--stds", ns_stds, "comma-separated noise levels");
  ns->add_option("--patches", ns_patches, "patch count (default: size / n_in)");
  ns->add_option("--out", ns_out, "report JSON path");
  ns->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    const PointCloud input = read_xyz(ns_in);
    const PointCloud ref = read_xyz(ns_ref);
    const TrainState st = unpack_train_state(load_checkpoint(ns_ckpt), cfg);
    json objects = json::array();
    std::size_t row = 0;
    for (const std::string& tok : split_csv(ns_stds)) {
      const double stddev = std::stod(tok);
      const PointCloud noisy =
          add_gaussian_noise(input, stddev, derive_seed(cfg.seed, 1 + row));
      const PointCloud out =
          upsample_clustered(noisy, st.gen, cfg, ns_patches, cfg.seed);
      objects.push_back(eval_entry("std=" + tok, out, ref));
      ++row;
    }
    const json report = make_report("noise-sweep", objects, cfg, cfg.seed);
    print_report(report, timer.seconds());
    if (!ns_out.empty()) write_json(ns_out, report);
  });

  // --- scale-sweep ---
  auto* sc = app.add_subcommand("scale-sweep",
                                "evaluate across input sizes of one object");
  sc->fallthrough();
  std::string sc_obj, sc_ckpt, sc_out;
  std::string sc_sizes = "256,512,1024,2048,4096";
  std::size_t sc_ref_size = 20000;
  sc->add_option("--object", sc_obj, "fixture name or .ply path")->required();
  sc->add_option("--checkpoint", sc_ckpt, "trained checkpoint")->required();
  sc->add_option("--sizes", sc_sizes, "comma-separated input sizes");
  sc->add_option("--ref-size", sc_ref_size, "dense reference sample count");
  sc->add_option("--out", sc_out, "report JSON path");
  sc->callback([&] {
    const TrainConfig cfg = load_cfg();
    Timer timer;
    const TriMesh mesh = load_object(sc_obj);
    const PointCloud ref = sample_mesh_uniform(mesh, sc_ref_size, derive_seed(cfg.seed, 0));
    const TrainState st = unpack_train_state(load_checkpoint(sc_ckpt), cfg);
    json objects = json::array();
    std::size_t row = 0;
    for (const std::string& tok : split_csv(sc_sizes)) {
      const std::size_t size = std::stoull(tok);
      if (size % cfg.n_in != 0)
        throw DataError("size " + tok + " is not a multiple of n_in " +
                        std::to_string(cfg.n_in));
      const PointCloud input =
          sample_mesh_uniform(mesh, size, derive_seed(cfg.seed, 100 + row));
      const PointCloud out =
          upsample_clustered(input, st.gen, cfg, size / cfg.n_in, cfg.seed);
      objects.push_back(eval_entry("n=" + tok, out, ref));
      ++row;
    }
    const json report = make_report("scale-sweep", objects, cfg, cfg.seed);
    print_report(report, timer.seconds());
    if (!sc_out.empty()) write_json(sc_out, report);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
