#include "lfi/models.hpp"

#include "lfi/error.hpp"
#include "lfi/json_util.hpp"

namespace lfi {

nlohmann::json ModelOptions::to_json() const {
  nlohmann::json j = {{"model", model},
                      {"ma2_length", ma2_length},
                      {"species", species},
                      {"timeout_seconds", timeout_seconds},
                      {"max_events", max_events},
                      {"vilar_release", vilar_release == VilarReleaseRate::ThetaA ? "theta_A" : "theta_R"}};
  if (t0) j["t0"] = *t0;
  if (t_end) j["t_end"] = *t_end;
  if (dt) j["dt"] = *dt;
  if (!reaction_file.empty()) j["reaction_file"] = reaction_file;
  if (prior) j["prior"] = prior_to_json(*prior);
  if (reference_theta) j["reference_theta"] = *reference_theta;
  return j;
}

ModelOptions ModelOptions::from_json(const nlohmann::json& j) {
  const std::string ctx = "model";
  require_known_keys(j, {"model", "ma2_length", "t0", "t_end", "dt", "species", "timeout_seconds",
                         "max_events", "vilar_release", "reaction_file", "prior", "reference_theta"},
                     ctx);
  ModelOptions o;
  json_read(j, "model", o.model, ctx);
  json_read(j, "ma2_length", o.ma2_length, ctx);
  if (j.contains("t0")) o.t0 = json_get<double>(j, "t0", ctx);
  if (j.contains("t_end")) o.t_end = json_get<double>(j, "t_end", ctx);
  if (j.contains("dt")) o.dt = json_get<double>(j, "dt", ctx);
  json_read(j, "species", o.species, ctx);
  json_read(j, "timeout_seconds", o.timeout_seconds, ctx);
  json_read(j, "max_events", o.max_events, ctx);
  if (j.contains("vilar_release")) {
    const auto r = json_get<std::string>(j, "vilar_release", ctx);
    if (r == "theta_A") o.vilar_release = VilarReleaseRate::ThetaA;
    else if (r == "theta_R") o.vilar_release = VilarReleaseRate::ThetaR;
    else throw ConfigError("model.vilar_release must be theta_A or theta_R");
  }
  json_read(j, "reaction_file", o.reaction_file, ctx);
  if (j.contains("prior")) o.prior = prior_from_json(j.at("prior"));
  if (j.contains("reference_theta"))
    o.reference_theta = json_get<std::vector<double>>(j, "reference_theta", ctx);
  return o;
}

namespace {

ModelDefinition reaction_model(std::string name, ReactionNetwork net, UniformBoxPrior prior,
                               ParameterVector reference, const ModelOptions& o,
                               SimGrid grid, std::uint64_t default_events) {
  if (prior.dim() != net.param_count())
    throw ConfigError("prior dimension differs from the network's parameter count");
  if (o.t0) grid.t0 = *o.t0;
  if (o.t_end) grid.t_end = *o.t_end;
  if (o.dt) grid.dt = *o.dt;
  if (!o.species.empty()) {
    std::vector<std::size_t> subset;
    for (const auto& s : o.species) subset.push_back(net.species_index(s));
    grid.species_subset = subset;
  }
  const std::size_t T = grid.timepoints();
  SsaOptions ssa;
  ssa.timeout = std::chrono::duration<double>(o.timeout_seconds);
  ssa.max_events = o.max_events != 0 ? o.max_events : default_events;

  ModelDefinition m;
  m.name = std::move(name);
  m.prior = std::move(prior);
  m.shape.timepoints = T;
  m.shape.t0 = grid.t0;
  m.shape.dt = grid.dt;
  if (grid.species_subset) {
    for (auto s : *grid.species_subset) m.shape.names.push_back(net.species_names()[s]);
  } else {
    m.shape.names = net.species_names();
  }
  m.shape.channels = m.shape.names.size();
  m.reference_theta = o.reference_theta ? *o.reference_theta : std::move(reference);
  m.simulate = [net = std::move(net), grid, ssa](std::span<const double> theta, RngStream& rng) {
    return ssa_simulate(net, theta, grid, rng, ssa);
  };
  ModelOptions resolved = o;
  resolved.t0 = grid.t0;
  resolved.t_end = grid.t_end;
  resolved.dt = grid.dt;
  resolved.species = m.shape.names;
  resolved.max_events = ssa.max_events;
  m.description = resolved.to_json();
  m.description["prior"] = prior_to_json(m.prior);
  return m;
}

}  // namespace

ModelDefinition make_model(const ModelOptions& o) {
  if (o.model == "ma2") {
    if (o.ma2_length < 3) throw ConfigError("ma2_length must be at least 3");
    ModelDefinition m;
    m.name = "ma2";
    m.prior = o.prior ? *o.prior : ma2_prior();
    m.shape = {1, o.ma2_length, 1.0, 1.0, {"x"}};
    m.reference_theta = o.reference_theta ? *o.reference_theta : ParameterVector{0.6, 0.2};
    m.simulate = [p = o.ma2_length](std::span<const double> theta, RngStream& rng) {
      return ma2_generate(theta, p, rng);
    };
    m.description = {{"model", "ma2"}, {"ma2_length", o.ma2_length},
                     {"prior", prior_to_json(m.prior)}};
    return m;
  }
  if (o.model == "lotka_volterra") {
    return reaction_model("lotka_volterra", build_lotka_volterra(),
                          o.prior ? *o.prior : lotka_volterra_prior(), lotka_volterra_true_theta(),
                          o, SimGrid{0.0, 30.0, 1.0, {}}, kLotkaVolterraMaxEvents);
  }
  if (o.model == "vilar") {
    ModelOptions with_species = o;
    if (with_species.species.empty()) with_species.species = {"C"};
    return reaction_model("vilar", build_vilar(o.vilar_release), o.prior ? *o.prior : vilar_prior(),
                          vilar_reference_theta(), with_species, SimGrid{0.0, 200.0, 0.5, {}},
                          kVilarMaxEvents);
  }
  if (o.model == "custom") {
    if (o.reaction_file.empty()) throw ConfigError("custom model needs reaction_file");
    if (!o.prior) throw ConfigError("custom model needs an explicit prior");
    ReactionNetwork net = load_reaction_network(o.reaction_file);
    ParameterVector ref = o.prior->midpoint();
    return reaction_model("custom", std::move(net), *o.prior, ref, o, SimGrid{0.0, 10.0, 1.0, {}},
                          0);
  }
  throw ConfigError("unknown model '" + o.model + "' (expected ma2, lotka_volterra, vilar, custom)");
}

}  // namespace lfi
