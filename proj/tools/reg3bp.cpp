/* -----------------------------------------------------------------
 * Command-line driver.
 *
 *   reg3bp build-dataset  [--out FILE] [--scale S] [--force]
 *   reg3bp find-h0        [--s1 NUM/DEN] [--json OUT]
 *   reg3bp verify-coverings [--grid N] [--depth D]
 *   reg3bp verify-avoidance
 *   reg3bp verify-approach  [--L VAL]
 *   reg3bp certify-word WORD
 *   reg3bp trace-orbit --start {w0|wk:K|file:PATH} --frame {std|reg}
 *                      --time T --csv OUT
 *
 * Global: --config FILE (integrator settings), --dataset FILE,
 *         --report FILE, --scale S.
 * Exit codes: 0 all requested verdicts pass, 1 verification failure,
 * 2 configuration or data error.
 * ----------------------------------------------------------------- */

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "reg3bp/prove.hpp"

using namespace reg3bp;

namespace {

prove::ProveConfig load_config(const std::string& path) {
  prove::ProveConfig pc;
  if (path.empty()) return pc;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  nlohmann::json j;
  in >> j;
  if (j.contains("order")) pc.integ.order = j["order"].get<int>();
  if (j.contains("step")) pc.integ.init_step = j["step"].get<double>();
  if (j.contains("tol")) pc.integ.tol = j["tol"].get<double>();
  if (j.contains("max_steps")) pc.integ.max_steps = j["max_steps"].get<int>();
  if (j.contains("grid")) pc.sub.grid = j["grid"].get<int>();
  if (j.contains("edge_grid")) pc.sub.edge_grid = j["edge_grid"].get<int>();
  if (j.contains("depth")) pc.sub.max_depth = j["depth"].get<int>();
  if (j.contains("eval_budget")) pc.sub.eval_budget = j["eval_budget"].get<int>();
  if (j.contains("h0_width_budget")) pc.h0_width_budget = j["h0_width_budget"].get<double>();
  if (j.contains("approach_kmax")) pc.approach_kmax = j["approach_kmax"].get<int>();
  return pc;
}

prove::ProofReport load_or_new_report(const std::string& path) {
  prove::ProofReport rep;
  std::ifstream in(path);
  if (!in.good()) return rep;
  nlohmann::json j;
  in >> j;
  auto unhex = [](const nlohmann::json& o) {
    return ivl::Interval(prove::detail::unhexf(o.at("lo").get<std::string>()),
                         prove::detail::unhexf(o.at("hi").get<std::string>()));
  };
  if (j.contains("h0")) rep.h0 = unhex(j["h0"]);
  if (j.contains("tau")) rep.tau = unhex(j["tau"]);
  if (j.contains("scale")) rep.scale = j["scale"].get<double>();
  if (j.contains("config_hash")) rep.config_hash = j["config_hash"].get<std::uint64_t>();
  if (j.contains("coverings"))
    for (auto& [id, cj] : j["coverings"].items()) {
      cover::CoveringCertificate c;
      c.id = id;
      c.from = cj.value("from", "");
      c.to = cj.value("to", "");
      c.direction = cj.value("direction", "forward") == std::string("forward")
                        ? cover::Direction::forward
                        : cover::Direction::back;
      c.leg = cj.value("leg", "");
      c.symmetry_derived = cj.value("symmetry_derived", false);
      c.valid = cj.value("valid", false);
      c.grid = cj.value("grid", 0);
      c.margin_contraction = cj.value("margin_contraction", 0.0);
      c.margin_exit = cj.value("margin_exit", 0.0);
      rep.coverings[id] = c;
    }
  if (j.contains("certs"))
    for (auto& [id, cj] : j["certs"].items()) {
      prove::Certificate c;
      c.id = id;
      c.kind = cj.value("kind", "");
      c.pass = cj.value("pass", false);
      c.margin = cj.value("margin", 0.0);
      c.detail = cj.value("detail", "");
      rep.certs[id] = c;
    }
  if (j.contains("verdicts"))
    for (auto& [k, v] : j["verdicts"].items()) rep.verdicts[k] = v.get<bool>();
  if (j.contains("conclusions"))
    for (auto& v : j["conclusions"]) rep.conclusions.push_back(v.get<std::string>());
  return rep;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"validated covering-relation proofs for collision dynamics in the "
               "Earth-Moon planar restricted three-body problem"};
  app.require_subcommand(1);

  std::string config_path, dataset_path = "chart_dataset.json",
              report_path = "proof_report.json";
  double scale = 1.0;
  app.add_option("--config", config_path, "integrator/subdivision settings (JSON)");
  app.add_option("--dataset", dataset_path, "chart dataset file");
  app.add_option("--report", report_path, "cumulative proof report file");
  app.add_option("--scale", scale, "global h-set scale factor (criterion fallback)");

  auto* cmd_build = app.add_subcommand("build-dataset", "refine seeds, verify h0, write the dataset");
  std::string build_out;
  bool build_force = false;
  cmd_build->add_option("--out", build_out, "output path (defaults to --dataset)");
  cmd_build->add_flag("--force", build_force, "rebuild even if the file exists");

  auto* cmd_h0 = app.add_subcommand("find-h0", "verified enclosure of the collision-orbit energy");
  std::string s1_spec = "58696/65536", h0_json;
  cmd_h0->add_option("--s1", s1_spec, "shooting time as NUM/DEN");
  cmd_h0->add_option("--json", h0_json, "write the result as JSON");

  auto* cmd_cov = app.add_subcommand("verify-coverings", "integrated and derived covering sequences");
  int opt_grid = -1, opt_depth = -1;
  cmd_cov->add_option("--grid", opt_grid, "interior grid per axis");
  cmd_cov->add_option("--depth", opt_depth, "refinement depth cap");

  auto* cmd_av = app.add_subcommand("verify-avoidance", "collision exclusion along the legs");

  auto* cmd_ap = app.add_subcommand("verify-approach", "cone bounds, gluing, approach family");
  double opt_L = -1.0;
  cmd_ap->add_option("--L", opt_L, "shear parameter override");

  auto* cmd_word = app.add_subcommand("certify-word", "symbolic-word conclusion over the report");
  std::string word;
  cmd_word->add_option("word", word, "schema X/Y with X,Y in {C,Oc,A}, or cyclic word over {c,o,k}")
      ->required();

  auto* cmd_trace = app.add_subcommand("trace-orbit", "CSV trace of an orbit");
  prove::TraceOptions topt;
  std::string frame = "reg", csv_out = "orbit.csv";
  cmd_trace->add_option("--start", topt.start, "w0 | wk:K | file:PATH");
  cmd_trace->add_option("--frame", frame, "std | reg");
  cmd_trace->add_option("--time", topt.duration, "duration");
  cmd_trace->add_option("--dt", topt.dt, "sample spacing");
  cmd_trace->add_option("--csv", csv_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    prove::ProveConfig pc = load_config(config_path);
    if (opt_grid > 0) pc.sub.grid = opt_grid;
    if (opt_depth > 0) pc.sub.max_depth = opt_depth;

    if (cmd_build->parsed()) {
      std::string out = build_out.empty() ? dataset_path : build_out;
      auto ds = prove::prepare_dataset(out, pc, scale, build_force);
      std::cout << "dataset written to " << out << "  (h0 width " << ds.h0.diam() << ")\n";
      return 0;
    }

    if (cmd_h0->parsed()) {
      auto slash = s1_spec.find('/');
      if (slash == std::string::npos) throw std::runtime_error("--s1 expects NUM/DEN");
      double s1 = std::stod(s1_spec.substr(0, slash)) / std::stod(s1_spec.substr(slash + 1));
      auto m = model::MassParams::earth_moon();
      auto r = prove::find_h0(m, s1, pc);
      std::cout.precision(17);
      std::cout << "h0 in [" << r.h0.lo() << ", " << r.h0.hi() << "]  width " << r.width
                << "\n"
                << "tau in [" << r.tau.lo() << ", " << r.tau.hi() << "]\n"
                << (r.in_published_interval ? "inside" : "OUTSIDE")
                << " the published interval [-0.71106, -0.71105]\n"
                << r.note << "\n";
      if (!h0_json.empty()) {
        nlohmann::json j;
        j["h0"] = {{"lo", prove::detail::hexf(r.h0.lo())},
                   {"hi", prove::detail::hexf(r.h0.hi())},
                   {"lo_dec", r.h0.lo()},
                   {"hi_dec", r.h0.hi()}};
        j["width"] = r.width;
        j["tau"] = {{"lo", r.tau.lo()}, {"hi", r.tau.hi()}};
        j["s1"] = s1_spec;
        j["in_published_interval"] = r.in_published_interval;
        j["wall_seconds"] = r.wall;
        std::ofstream(h0_json) << j.dump(1) << "\n";
      }
      // keep the report in sync for later word certification
      auto rep = load_or_new_report(report_path);
      rep.h0 = r.h0;
      rep.tau = r.tau;
      rep.verdicts["energy_enclosure"] = r.in_published_interval;
      prove::save_report(rep, report_path);
      return r.in_published_interval ? 0 : 1;
    }

    if (cmd_word->parsed()) {
      auto rep = load_or_new_report(report_path);
      try {
        auto wc = prove::certify_word(word, rep);
        std::cout << "word " << wc.word << ": PASS\n" << wc.conclusion << "\n";
        rep.conclusions.push_back(wc.word + ": " + wc.conclusion);
        prove::save_report(rep, report_path);
        return 0;
      } catch (const cover::MissingPremise& e) {
        nlohmann::json j;
        j["word"] = word;
        j["error"] = e.what();
        std::cout << j.dump(1) << "\n";
        return 1;
      }
    }

    if (cmd_trace->parsed()) {
      topt.frame = (frame == "std") ? model::Frame::standard : model::Frame::regularized;
      auto ds = prove::prepare_dataset(dataset_path, pc, scale);
      std::ofstream out(csv_out);
      if (!out) throw std::runtime_error("cannot write " + csv_out);
      prove::trace_orbit(ds, topt, out);
      std::cout << "trace written to " << csv_out << "\n";
      return 0;
    }

    // verification subcommands share the dataset and cumulative report
    auto ds = prove::prepare_dataset(dataset_path, pc, scale);
    auto rep = load_or_new_report(report_path);
    rep.h0 = ds.h0;
    rep.tau = ds.tau;
    rep.scale = ds.scale;
    rep.config_hash = pc.hash();
    rep.verdicts["energy_enclosure"] =
        ivl::Interval(-0.71106, -0.71105).contains(ds.h0) && ds.h0.diam() <= pc.h0_width_budget;

    bool ok = true;
    if (cmd_cov->parsed()) {
      prove::verify_sequences(ds, pc, rep);
      ok = rep.verdicts["covering_sequences"];
      std::cout << "covering sequences: " << (ok ? "PASS" : "FAIL") << "  ("
                << rep.walls["verify_sequences"] << " s)\n";
      for (const auto& [id, c] : rep.coverings)
        if (!c.symmetry_derived)
          std::cout << "  " << id << "  contraction margin " << c.margin_contraction
                    << ", exit margin " << c.margin_exit << "\n";
    } else if (cmd_av->parsed()) {
      prove::verify_avoidance(ds, pc, rep);
      ok = rep.verdicts["collision_avoidance"];
      std::cout << "collision avoidance: " << (ok ? "PASS" : "FAIL") << "  ("
                << rep.walls["verify_avoidance"] << " s)\n";
      for (const auto& [id, c] : rep.certs)
        if (id.rfind("avoid:", 0) == 0 && !c.pass) std::cout << "  FAIL " << id << ": " << c.detail << "\n";
    } else if (cmd_ap->parsed()) {
      prove::ChartDataset ds2 = ds;
      if (opt_L > 0.0) ds2.L = opt_L;
      prove::verify_approach(ds2, pc, rep);
      prove::verify_disc(ds2, rep);
      ok = rep.verdicts["approach_machinery"] && rep.verdicts["collision_disc"];
      std::cout << "approach machinery: " << (ok ? "PASS" : "FAIL") << "  ("
                << rep.walls["verify_approach"] << " s)\n";
      for (const auto& [id, c] : rep.certs)
        if (id.rfind("approach:", 0) == 0)
          std::cout << "  " << (c.pass ? "pass " : "FAIL ") << id << "\n";
    }
    prove::save_report(rep, report_path);
    std::cout << "report updated: " << report_path << "\n";
    return ok ? 0 : 1;
  } catch (const cover::MissingPremise& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const cover::ConditionFailed& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 1;
  } catch (const prove::EnclosureTooWide& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 1;
  } catch (const prove::AvoidanceFailed& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
