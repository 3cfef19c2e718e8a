#include "spheresfm/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "spheresfm/error.hpp"
#include "spheresfm/formats.hpp"
#include "spheresfm/pipeline.hpp"
#include "spheresfm/server.hpp"

namespace spheresfm {

namespace {

std::pair<std::string, std::string> split_pair(const std::string& text) {
  const auto pos = text.find_first_of(",:");
  if (pos == std::string::npos || pos == 0 || pos + 1 == text.size()) {
    throw Error(ErrorCategory::InvalidArgument, "pair must be written as a,b");
  }
  return {text.substr(0, pos), text.substr(pos + 1)};
}

// Load, mutate, save. Nothing is written when fn throws.
template <typename Fn>
void update(const std::string& dir, Fn&& fn) {
  Project project = load_project(dir);
  fn(project);
  save_project(project);
}

int serve(const std::string& dir, const std::string& host, std::optional<int> port_flag,
          bool annotate, std::ostream& out) {
  ProjectServer server(dir);
  const int port = server.bind(host, port_flag.value_or(server.config().port));
  if (annotate) {
    out << "annotation UI: http://" << host << ":" << port << "/\n";
  } else {
    out << "serving " << dir << " on http://" << host << ":" << port << "/api/project\n";
  }
  out.flush();
  server.run();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reconstruction from full-view equirectangular panoramas", "spheresfm"};
  app.require_subcommand(1);
  std::string dir = ".";
  app.add_option("-C,--project", dir, "Project directory")->capture_default_str();

  std::string init_dir;
  auto* init = app.add_subcommand("init", "Create an empty project");
  init->add_option("dir", init_dir)->required();

  std::string image_file;
  std::optional<std::string> image_id;
  auto* add = app.add_subcommand("add-image", "Copy a 2:1 panorama into the project");
  add->add_option("file", image_file)->required()->check(CLI::ExistingFile);
  add->add_option("--id", image_id, "Image id (default: file stem)");

  std::string pair_text;
  std::string match_file;
  bool as_manual = false;
  auto* imp = app.add_subcommand("import-matches", "Import JSONL correspondences for a pair");
  imp->add_option("pair", pair_text, "a,b")->required();
  imp->add_option("file", match_file)->required()->check(CLI::ExistingFile);
  imp->add_flag("--as-manual", as_manual, "Treat records as manual annotations");

  std::string a;
  std::string b;
  auto pair_args = [&](CLI::App* cmd) {
    cmd->add_option("a", a)->required();
    cmd->add_option("b", b)->required();
  };
  bool manual_only = false;
  bool use_ransac = false;
  auto* est = app.add_subcommand("estimate-pair", "Estimate F, epipoles and R for a pair");
  pair_args(est);
  auto* mo = est->add_flag("--manual-only", manual_only, "Eight-point fit on manual matches (default)");
  est->add_flag("--ransac", use_ransac, "RANSAC over every match of the pair")->excludes(mo);

  std::optional<double> epsilon;
  auto* aug = app.add_subcommand("augment", "Accept imported matches consistent with F");
  pair_args(aug);
  aug->add_option("--epsilon", epsilon, "Residual threshold (default: config filter_epsilon)");

  std::optional<std::string> baseline_text;
  std::optional<std::string> poses_file;
  auto* reg = app.add_subcommand("register", "Register all cameras on a plane");
  reg->add_option("--baseline", baseline_text, "Gauge pair a,b (default: first two images)");
  reg->add_option("--poses", poses_file, "Poses output (default: <project>/poses.json)");

  auto* tri = app.add_subcommand("triangulate", "Triangulate tracks into sparse points");
  auto* rect = app.add_subcommand("rectify", "Rectify a solved pair about its baseline");
  pair_args(rect);
  auto* disp = app.add_subcommand("disparity", "Disparity map of a rectified pair");
  pair_args(disp);
  auto* dense = app.add_subcommand("dense", "Dense colored cloud from a disparity map");
  pair_args(dense);

  bool sparse_flag = false;
  bool dense_flag = false;
  std::optional<std::string> ply_out;
  auto* exp = app.add_subcommand("export-ply", "Write the sparse or dense cloud as PLY");
  auto* sf = exp->add_flag("--sparse", sparse_flag, "Sparse points (default)");
  exp->add_flag("--dense", dense_flag, "All dense clouds")->excludes(sf);
  exp->add_option("-o,--output", ply_out, "Output file (default: <project>/sparse.ply or dense.ply)");

  std::optional<int> port;
  std::string host = "127.0.0.1";
  auto* srv = app.add_subcommand("serve", "Serve the project over HTTP");
  srv->add_option("--port", port);
  srv->add_option("--host", host)->capture_default_str();
  auto* ann = app.add_subcommand("annotate", "Serve the project and print the UI address");
  ann->add_option("--port", port);
  ann->add_option("--host", host)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (init->parsed()) {
      init_project(init_dir);
      out << "initialized " << init_dir << "\n";
    } else if (add->parsed()) {
      update(dir, [&](Project& p) {
        const ImageEntry& e = add_image(p, image_file, image_id);
        out << "added " << e.id << " (" << e.size.width << "x" << e.size.height << ")\n";
      });
    } else if (imp->parsed()) {
      const auto [x, y] = split_pair(pair_text);
      update(dir, [&](Project& p) {
        const int n = import_matches_file(p, match_file, normalize_pair(x, y), as_manual);
        out << "imported " << n << (as_manual ? " manual" : "") << " matches\n";
      });
    } else if (est->parsed()) {
      const Config config = load_config(dir);
      update(dir, [&](Project& p) {
        const PairSolution& s = estimate_pair(
            p, a, b, use_ransac ? EstimateMethod::Ransac : EstimateMethod::Linear, config);
        out << s.method << " fit: " << s.inlier_ids.size() << " inliers\n";
      });
    } else if (aug->parsed()) {
      const Config config = load_config(dir);
      update(dir, [&](Project& p) {
        const int n = augment_pair(p, a, b, epsilon.value_or(config.filter_epsilon));
        out << "augmented " << n << " matches\n";
      });
    } else if (reg->parsed()) {
      const Config config = load_config(dir);
      std::optional<std::pair<std::string, std::string>> baseline;
      if (baseline_text) baseline = split_pair(*baseline_text);
      Project project = load_project(dir);
      const RigState& rig = register_rig(project, config, baseline);
      const std::filesystem::path poses =
          poses_file ? std::filesystem::path(*poses_file) : project.dir / "poses.json";
      write_file_atomic(poses, poses_document(project));
      save_project(project);
      out << "registered " << rig.image_ids.size() << " cameras\n";
    } else if (tri->parsed()) {
      update(dir, [&](Project& p) {
        const std::size_t n = triangulate_points(p);
        out << "triangulated " << n << " points from " << p.points.size() << " tracks\n";
      });
    } else if (rect->parsed()) {
      const Config config = load_config(dir);
      update(dir, [&](Project& p) {
        rectify_step(p, a, b, config);
        out << "rectified " << a << "/" << b << "\n";
      });
    } else if (disp->parsed()) {
      const Config config = load_config(dir);
      update(dir, [&](Project& p) {
        out << "disparity: " << disparity_step(p, a, b, config) << " valid pixels\n";
      });
    } else if (dense->parsed()) {
      update(dir, [&](Project& p) { out << "dense: " << dense_step(p, a, b) << " points\n"; });
    } else if (exp->parsed()) {
      const Project project = load_project(dir);
      const auto points = dense_flag ? dense_points(project) : sparse_points(project);
      const std::filesystem::path target =
          ply_out ? std::filesystem::path(*ply_out)
                  : project.dir / (dense_flag ? "dense.ply" : "sparse.ply");
      write_ply(target, points);
      out << "wrote " << points.size() << " points to " << target.string() << "\n";
    } else if (srv->parsed() || ann->parsed()) {
      return serve(dir, host, port, ann->parsed(), out);
    }
  } catch (const Error& e) {
    err << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace spheresfm
