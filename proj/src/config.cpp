#include "flc/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>

#include "flc/errors.hpp"

namespace flc::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  raise(ErrorKind::ConfigError, path + ": " + what);
}

const json* find(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

double as_number(const json& v, const std::string& path) {
  if (v.is_string()) fail(path, "placeholder value '" + v.get<std::string>() + "', supply a number");
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "must be finite");
  return x;
}

double number(const json& obj, const char* key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v) fail(path + "." + key, "required");
  return as_number(*v, path + "." + key);
}

double number_or(const json& obj, const char* key, const std::string& path, double fallback) {
  const json* v = find(obj, key);
  return v ? as_number(*v, path + "." + key) : fallback;
}

std::size_t count_or(const json& obj, const char* key, const std::string& path, std::size_t fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<long long>() < 0) {
    fail(path + "." + key, "expected a non-negative integer");
  }
  return v->get<std::size_t>();
}

long long integer(const json& v, const std::string& path) {
  if (v.is_string()) fail(path, "placeholder value '" + v.get<std::string>() + "', supply an integer");
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<long long>();
}

std::string string_or(const json& obj, const char* key, const std::string& path,
                      const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) fail(path + "." + key, "expected a string");
  return v->get<std::string>();
}

const json& array(const json& obj, const char* key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v || !v->is_array()) fail(path + "." + key, "expected an array");
  return *v;
}

grid::Matrix matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) fail(path, "expected a non-empty square matrix");
  const auto n = static_cast<Eigen::Index>(v.size());
  grid::Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) fail(path, "matrix is not square");
    for (Eigen::Index k = 0; k < n; ++k) {
      m(i, k) = as_number(row[static_cast<std::size_t>(k)],
                          path + "[" + std::to_string(i) + "][" + std::to_string(k) + "]");
    }
  }
  if (m != m.transpose()) fail(path, "matrix must be symmetric");
  return m;
}

struct GeneratorEntry {
  grid::GeneratorParams params;
  std::optional<double> pm;
  std::optional<double> delta0;
  std::optional<double> delta_star;
  std::optional<long long> bus;
  double xd_prime = 0.0;
};

GeneratorEntry parse_generator(const json& g, const std::string& path, const ControlBlock& ctl,
                               double frequency_hz) {
  GeneratorEntry e;
  if (const json* h = find(g, "h")) {
    e.params.inertia = as_number(*h, path + ".h") / (std::numbers::pi * frequency_hz);
  } else {
    e.params.inertia = number(g, "inertia", path);
  }
  e.params.damping = number_or(g, "damping", path, 0.0);
  e.params.emf = number_or(g, "emf", path, 1.0);
  e.params.alpha = number_or(g, "alpha", path, ctl.alpha);
  e.params.beta = number_or(g, "beta", path, ctl.beta);
  if (const json* v = find(g, "pm")) e.pm = as_number(*v, path + ".pm");
  if (const json* v = find(g, "delta0")) e.delta0 = as_number(*v, path + ".delta0");
  if (const json* v = find(g, "delta_star")) e.delta_star = as_number(*v, path + ".delta_star");
  if (const json* v = find(g, "bus")) e.bus = integer(*v, path + ".bus");
  e.xd_prime = number_or(g, "xd_prime", path, 0.0);
  if (!(e.params.inertia > 0.0)) fail(path, "inertia must be > 0");
  if (!(e.params.emf > 0.0)) fail(path, "emf must be > 0");
  if (e.params.damping < 0.0 || e.params.alpha < 0.0 || e.params.beta < 0.0) {
    fail(path, "damping, alpha and beta must be >= 0");
  }
  return e;
}

ControlBlock parse_control(const json& c) {
  const std::string path = "control";
  ControlBlock ctl;
  ctl.alpha = number_or(c, "alpha", path, ctl.alpha);
  ctl.beta = number_or(c, "beta", path, ctl.beta);
  if (const json* v = find(c, "saturation")) {
    ctl.saturation = as_number(*v, path + ".saturation");
    if (!(*ctl.saturation > 0.0)) fail(path + ".saturation", "must be > 0");
  }
  ctl.mode = control::parse_mode(string_or(c, "mode", path, "CPFL"));
  ctl.distributed_mode = control::parse_mode(string_or(c, "distributed_mode", path, "FLC"));
  ctl.level = number_or(c, "level", path, 0.0);
  if (const json* v = find(c, "modes")) {
    ctl.sweep_modes.clear();
    for (const auto& m : *v) {
      const auto mode = control::parse_mode(m.get<std::string>());
      if (mode != control::ControllerMode::Flc && mode != control::ControllerMode::Dpfl) {
        fail(path + ".modes", "sweep modes must be FLC or DPFL");
      }
      ctl.sweep_modes.push_back(mode);
    }
  }
  if (const json* v = find(c, "levels")) {
    ctl.sweep_levels.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      ctl.sweep_levels.push_back(as_number((*v)[i], path + ".levels[" + std::to_string(i) + "]"));
    }
  }
  if (const json* v = find(c, "evaluate_faults")) {
    ctl.sweep_faults = v->get<std::vector<std::string>>();
  }
  return ctl;
}

TrainingBlock parse_training(const json& t) {
  const std::string path = "training";
  TrainingBlock tb;
  if (const json* v = find(t, "dims")) {
    const auto dims = v->get<std::vector<std::size_t>>();
    if (dims.size() < 2 || dims.front() != 3 || dims.back() != 1) {
      fail(path + ".dims", "must start with 3 inputs and end with 1 output");
    }
    tb.architecture = kan::uniform_architecture(dims, count_or(t, "degree", path, 5));
  } else {
    tb.architecture = kan::uniform_architecture({3, 32, 1}, count_or(t, "degree", path, 5));
  }
  if (const json* v = find(t, "degrees")) {
    const auto degrees = v->get<std::vector<std::size_t>>();
    if (degrees.size() != tb.architecture.degrees.size()) fail(path + ".degrees", "one per layer");
    tb.architecture.degrees = degrees;
  }
  tb.optimizer = kan::parse_optimizer(string_or(t, "optimizer", path, "adam"));
  tb.lr = number_or(t, "lr", path, tb.lr);
  if (!(tb.lr >= 0.0)) fail(path + ".lr", "must be >= 0");
  tb.batch_size = count_or(t, "batch_size", path, tb.batch_size);
  if (tb.batch_size == 0) fail(path + ".batch_size", "must be >= 1");
  tb.epochs = count_or(t, "epochs", path, tb.epochs);
  tb.rounds = count_or(t, "rounds", path, tb.rounds);
  if (tb.rounds == 0) fail(path + ".rounds", "must be >= 1");
  if (const json* v = find(t, "master_seed")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
      fail(path + ".master_seed", "expected a non-negative integer");
    }
    tb.master_seed = v->get<std::uint64_t>();
  }
  tb.fault = string_or(t, "fault", path, "");
  tb.data_t_max = number_or(t, "data_t_max", path, tb.data_t_max);
  tb.probe_stride = count_or(t, "probe_stride", path, tb.probe_stride);
  const std::string transport = string_or(t, "transport", path, "inprocess");
  if (transport == "inprocess") {
    tb.transport = fed::TransportKind::InProcess;
  } else if (transport == "socket") {
    tb.transport = fed::TransportKind::Socket;
  } else {
    fail(path + ".transport", "expected 'inprocess' or 'socket'");
  }
  return tb;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) raise(ErrorKind::ConfigError, "config must be a JSON object");
  if (const json* v = find(doc, "schema_version"); v && v->get<int>() != kConfigSchemaVersion) {
    raise(ErrorKind::ConfigError, "unsupported config schema_version");
  }
  RunConfig cfg;
  cfg.document = doc;
  cfg.hash = config_hash(doc);

  const json empty = json::object();
  const json& sim = find(doc, "simulation") ? doc["simulation"] : empty;
  cfg.simulation.dt = number_or(sim, "dt", "simulation", cfg.simulation.dt);
  cfg.simulation.t_max = number_or(sim, "t_max", "simulation", cfg.simulation.t_max);
  cfg.simulation.band = number_or(sim, "band", "simulation", cfg.simulation.band);
  if (!(cfg.simulation.dt > 0.0)) fail("simulation.dt", "must be > 0");
  if (!(cfg.simulation.t_max > 0.0)) fail("simulation.t_max", "must be > 0");
  if (!(cfg.simulation.band > 0.0)) fail("simulation.band", "must be > 0");
  const double default_t_fault = number_or(sim, "t_fault", "simulation", 0.5);
  const double default_t_clear = number_or(sim, "t_clear", "simulation", 0.75);

  cfg.control = parse_control(find(doc, "control") ? doc["control"] : empty);
  cfg.training = parse_training(find(doc, "training") ? doc["training"] : empty);

  const json& out = find(doc, "output") ? doc["output"] : empty;
  cfg.output.dir = string_or(out, "dir", "output", cfg.output.dir);
  cfg.output.base_power_kw = number_or(out, "base_power_kw", "output", cfg.output.base_power_kw);

  // System block.
  const json* sys = find(doc, "system");
  if (!sys || !sys->is_object()) fail("system", "required");
  const bool has_reduced = find(*sys, "reduced") != nullptr;
  const bool has_buses = find(*sys, "buses") != nullptr || find(*sys, "lines") != nullptr;
  if (has_reduced == has_buses) {
    fail("system", "give exactly one of 'reduced' or 'buses'/'lines'");
  }
  const double frequency_hz = number_or(*sys, "frequency_hz", "system", 60.0);

  std::vector<GeneratorEntry> gens;
  const json& gen_array = array(*sys, "generators", "system");
  for (std::size_t i = 0; i < gen_array.size(); ++i) {
    gens.push_back(parse_generator(gen_array[i], "system.generators[" + std::to_string(i) + "]",
                                   cfg.control, frequency_hz));
  }
  if (gens.empty()) raise(ErrorKind::ConfigError, "system.generators: at least one generator required");

  auto& model = cfg.system;
  if (has_reduced) {
    const json& red = (*sys)["reduced"];
    grid::ReducedNetwork net{matrix(red.at("G"), "system.reduced.G"),
                             matrix(red.at("B"), "system.reduced.B")};
    if (net.conductance.rows() != net.susceptance.rows()) fail("system.reduced", "G and B sizes differ");
    if (static_cast<std::size_t>(net.size()) != gens.size()) {
      fail("system.reduced", "matrix size must equal the generator count");
    }
    std::vector<int> all(gens.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    model.full.bus_count = gens.size();
    model.full.y_real = net.conductance;
    model.full.y_imag = net.susceptance;
    model.full.generator_buses = all;
    model.full.shunts.assign(gens.size(), {0.0, 0.0});
    model.from_reduced = true;
  } else {
    const json& buses = array(*sys, "buses", "system");
    std::vector<grid::Complex> shunts;
    for (std::size_t b = 0; b < buses.size(); ++b) {
      const std::string p = "system.buses[" + std::to_string(b) + "]";
      const long long id = integer(buses[b].at("id"), p + ".id");
      if (!model.bus_index.emplace(id, static_cast<int>(b)).second) fail(p + ".id", "duplicate bus id");
      const double g = number_or(buses[b], "shunt_g", p, 0.0) + number_or(buses[b], "load_p", p, 0.0);
      const double bsh = number_or(buses[b], "shunt_b", p, 0.0) - number_or(buses[b], "load_q", p, 0.0);
      shunts.emplace_back(g, bsh);
    }
    const auto lookup = [&](long long id, const std::string& p) {
      const auto it = model.bus_index.find(id);
      if (it == model.bus_index.end()) fail(p, "unknown bus id " + std::to_string(id));
      return it->second;
    };
    std::vector<grid::Line> lines;
    const json& line_array = array(*sys, "lines", "system");
    for (std::size_t k = 0; k < line_array.size(); ++k) {
      const std::string p = "system.lines[" + std::to_string(k) + "]";
      const auto& l = line_array[k];
      grid::Line line;
      line.from = lookup(integer(l.at("from"), p + ".from"), p + ".from");
      line.to = lookup(integer(l.at("to"), p + ".to"), p + ".to");
      const grid::Complex z{number_or(l, "r", p, 0.0), number(l, "x", p)};
      if (std::abs(z) == 0.0) fail(p, "zero series impedance");
      line.series = 1.0 / z;
      line.charging = number_or(l, "b", p, 0.0);
      line.tap = number_or(l, "tap", p, 1.0);
      if (line.tap == 0.0) line.tap = 1.0;
      if (line.from == line.to) fail(p, "branch endpoints coincide");
      lines.push_back(line);
    }
    // Each generator with a transient reactance gets an internal node.
    std::vector<int> gen_buses;
    std::set<int> used;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      const std::string p = "system.generators[" + std::to_string(i) + "]";
      if (!gens[i].bus) fail(p + ".bus", "required for bus/line systems");
      const int terminal = lookup(*gens[i].bus, p + ".bus");
      if (gens[i].xd_prime > 0.0) {
        const int internal = static_cast<int>(shunts.size());
        shunts.emplace_back(0.0, 0.0);
        lines.push_back({internal, terminal, 1.0 / grid::Complex{0.0, gens[i].xd_prime}, 0.0, 1.0});
        gen_buses.push_back(internal);
      } else {
        gen_buses.push_back(terminal);
      }
      if (!used.insert(gen_buses.back()).second) fail(p + ".bus", "two generators share a bus");
    }
    const std::size_t bus_count = shunts.size();
    model.full = grid::build_network(bus_count, std::move(lines), std::move(shunts), gen_buses);
  }

  const grid::ReducedNetwork pre = grid::kron_reduce(model.full);
  const bool manufactured = std::all_of(gens.begin(), gens.end(), [](auto& g) { return g.delta0.has_value(); });
  const bool given_pm = std::all_of(gens.begin(), gens.end(), [](auto& g) { return g.pm.has_value(); });
  if (!manufactured && !given_pm) {
    fail("system.generators", "give 'pm' for every generator or 'delta0' for every generator");
  }
  for (auto& g : gens) model.generators.push_back(g.params);
  if (manufactured) {
    grid::Vector delta0(static_cast<Eigen::Index>(gens.size()));
    for (std::size_t i = 0; i < gens.size(); ++i) delta0[static_cast<Eigen::Index>(i)] = *gens[i].delta0;
    const grid::Vector pm = grid::manufacture_equilibrium(delta0, grid::emf_vector(model.generators), pre);
    for (std::size_t i = 0; i < gens.size(); ++i) model.generators[i].mech_power = pm[static_cast<Eigen::Index>(i)];
  } else {
    for (std::size_t i = 0; i < gens.size(); ++i) model.generators[i].mech_power = *gens[i].pm;
  }
  model.equilibrium = grid::solve_equilibrium(model.generators, pre);
  for (std::size_t i = 0; i < gens.size(); ++i) {
    model.generators[i].delta_star =
        gens[i].delta_star.value_or(model.equilibrium[static_cast<Eigen::Index>(i)]);
  }

  // Faults.
  if (const json* faults = find(doc, "faults")) {
    std::set<std::string> ids;
    for (std::size_t k = 0; k < faults->size(); ++k) {
      const std::string p = "faults[" + std::to_string(k) + "]";
      const auto& f = (*faults)[k];
      if (model.from_reduced) fail(p, "faults need a bus/line system, not reduced matrices");
      dyn::FaultScenario sc;
      sc.id = f.at("id").get<std::string>();
      if (sc.id == "none" || !ids.insert(sc.id).second) fail(p + ".id", "duplicate or reserved id '" + sc.id + "'");
      const auto bus_it = model.bus_index.find(integer(f.at("bus"), p + ".bus"));
      if (bus_it == model.bus_index.end()) fail(p + ".bus", "unknown bus");
      sc.faulted_bus = bus_it->second;
      const auto& line = f.at("line");
      if (!line.is_array() || line.size() != 2) fail(p + ".line", "expected [from, to]");
      const auto a = model.bus_index.find(integer(line[0], p + ".line[0]"));
      const auto b = model.bus_index.find(integer(line[1], p + ".line[1]"));
      if (a == model.bus_index.end() || b == model.bus_index.end()) fail(p + ".line", "unknown bus");
      sc.tripped_line = {a->second, b->second};
      sc.t_fault = number_or(f, "t_fault", p, default_t_fault);
      sc.t_clear = number_or(f, "t_clear", p, default_t_clear);
      try {
        dyn::validate(sc, model.full);
      } catch (const Error& e) {
        fail(p, e.what());
      }
      cfg.faults.push_back(sc);
    }
  }
  if (!cfg.training.fault.empty() && cfg.training.fault != "none") find_fault(cfg, cfg.training.fault);
  for (const auto& id : cfg.control.sweep_faults) find_fault(cfg, id);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::ConfigError, "cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::ConfigError, "config " + path + " is not valid JSON: " + e.what());
  }
  try {
    return parse_config(doc);
  } catch (const json::exception& e) {
    raise(ErrorKind::ConfigError, std::string("config ") + path + ": " + e.what());
  }
}

std::string config_hash(const nlohmann::json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<dyn::FaultScenario> find_fault(const RunConfig& cfg, const std::string& id) {
  if (id.empty() || id == "none") return std::nullopt;
  for (const auto& f : cfg.faults) {
    if (f.id == id) return f;
  }
  raise(ErrorKind::ConfigError, "unknown fault id '" + id + "'");
}

nlohmann::json config_schema() {
  static const char* kSchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "flcgrid run configuration",
  "type": "object",
  "required": ["system"],
  "properties": {
    "schema_version": {"const": 1},
    "system": {
      "type": "object",
      "description": "Either buses+lines (full network, Kron-reduced to generator internal nodes) or reduced G/B matrices.",
      "required": ["generators"],
      "properties": {
        "frequency_hz": {"type": "number", "default": 60, "description": "Used to convert h into inertia M = h / (pi f)."},
        "buses": {"type": "array", "items": {"type": "object", "required": ["id"], "properties": {
          "id": {"type": "integer"},
          "load_p": {"type": "number", "description": "Constant-impedance load, pu at 1 pu voltage."},
          "load_q": {"type": "number"},
          "shunt_g": {"type": "number"},
          "shunt_b": {"type": "number"}}}},
        "lines": {"type": "array", "items": {"type": "object", "required": ["from", "to", "x"], "properties": {
          "from": {"type": "integer"}, "to": {"type": "integer"},
          "r": {"type": "number", "default": 0}, "x": {"type": "number"},
          "b": {"type": "number", "default": 0, "description": "Total line charging."},
          "tap": {"type": "number", "default": 1}}}},
        "reduced": {"type": "object", "required": ["G", "B"], "properties": {
          "G": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
          "B": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}}},
        "generators": {"type": "array", "minItems": 1, "items": {"type": "object", "properties": {
          "bus": {"type": "integer", "description": "Terminal bus id (bus/line systems)."},
          "xd_prime": {"type": "number", "description": "Transient reactance; > 0 adds an internal node."},
          "inertia": {"type": "number", "description": "M in pu*s^2; alternative to h."},
          "h": {"type": "number", "description": "Inertia constant in seconds."},
          "damping": {"type": "number", "default": 0},
          "emf": {"type": "number", "default": 1},
          "pm": {"type": "number", "description": "Mechanical power; give for all generators or none."},
          "delta0": {"type": "number", "description": "Manufactured equilibrium angle; sets pm := Pe(delta0)."},
          "delta_star": {"type": "number", "description": "Defaults to the pre-fault equilibrium."},
          "alpha": {"type": "number"}, "beta": {"type": "number"}}}}
      }
    },
    "faults": {"type": "array", "items": {"type": "object", "required": ["id", "bus", "line"], "properties": {
      "id": {"type": "string"}, "bus": {"type": "integer"},
      "line": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
      "t_fault": {"type": "number"}, "t_clear": {"type": "number"}}}},
    "control": {"type": "object", "properties": {
      "alpha": {"type": "number", "default": 0.5}, "beta": {"type": "number", "default": 0.005},
      "saturation": {"type": ["number", "null"], "default": null},
      "mode": {"enum": ["NONE", "DPFL", "CPFL", "FLC"], "default": "CPFL", "description": "simulate: uniform mode when level is 0."},
      "distributed_mode": {"enum": ["DPFL", "FLC"], "default": "FLC"},
      "level": {"type": "number", "default": 0, "description": "simulate: distributed penetration percent."},
      "modes": {"type": "array", "items": {"enum": ["FLC", "DPFL"]}, "default": ["FLC", "DPFL"]},
      "levels": {"type": "array", "items": {"type": "number"}, "default": [0, 50, 100]},
      "evaluate_faults": {"type": "array", "items": {"type": "string"}}}},
    "training": {"type": "object", "properties": {
      "dims": {"type": "array", "items": {"type": "integer"}, "default": [3, 32, 1]},
      "degree": {"type": "integer", "default": 5},
      "degrees": {"type": "array", "items": {"type": "integer"}},
      "optimizer": {"enum": ["adam", "sgd"], "default": "adam"},
      "lr": {"type": "number", "default": 0.001},
      "batch_size": {"type": "integer", "default": 1024},
      "epochs": {"type": "integer", "default": 1},
      "rounds": {"type": "integer", "minimum": 1, "default": 20},
      "master_seed": {"type": "integer", "default": 0},
      "fault": {"type": "string", "description": "Fault id the dataset is generated from."},
      "data_t_max": {"type": "number", "default": 100},
      "probe_stride": {"type": "integer", "default": 10},
      "transport": {"enum": ["inprocess", "socket"], "default": "inprocess"}}},
    "simulation": {"type": "object", "properties": {
      "dt": {"type": "number", "default": 0.001},
      "t_max": {"type": "number", "default": 30},
      "t_fault": {"type": "number", "default": 0.5},
      "t_clear": {"type": "number", "default": 0.75},
      "band": {"type": "number", "default": 0.01}}},
    "output": {"type": "object", "properties": {
      "dir": {"type": "string", "default": "runs/default"},
      "base_power_kw": {"type": "number", "default": 100000}}}
  }
})";
  return json::parse(kSchema);
}

}  // namespace flc::config
