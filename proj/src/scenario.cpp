#include "spincavity/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "spincavity/crossings.hpp"
#include "spincavity/errors.hpp"
#include "spincavity/observables.hpp"

namespace spincavity {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "levels", "crossings", "hysteresis", "fit",
      "dynamics", "maser", "t0scan", "peaks"};
  return names;
}

std::string g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    int diag = row[0];
    row[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int subst = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      diag = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, subst});
    }
  }
  return row[b.size()];
}

template <class Names>
std::string nearest_name(const std::string& word, const Names& names) {
  std::string best;
  int best_d = std::numeric_limits<int>::max();
  for (const auto& candidate : names) {
    const int d = levenshtein(word, candidate);
    if (d < best_d) {
      best_d = d;
      best = candidate;
    }
  }
  return best;
}

[[noreturn]] void line_error(int line, const std::string& what) {
  throw ValidationError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& v, int line, const std::string& key) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    line_error(line, "expected a real number for '" + key + "', got '" + v + "'");
  return x;
}

long parse_long(const std::string& v, int line, const std::string& key) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    line_error(line, "expected an integer for '" + key + "', got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  line_error(line, "expected true/false for '" + key + "', got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, int line,
                                      const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token = trim(token);
    if (token.empty()) line_error(line, "empty entry in list '" + key + "'");
    out.push_back(parse_double(token, line, key));
  }
  if (out.empty()) line_error(line, "list '" + key + "' is empty");
  return out;
}

std::string format_double_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += g17(xs[i]);
  }
  return out;
}

// field:height pairs, e.g. "0.45:0.03; 0.9:0.08".
std::vector<std::pair<double, double>> parse_pair_list(const std::string& v,
                                                       int line,
                                                       const std::string& key) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(v);
  std::string token;
  while (std::getline(ss, token, ';')) {
    token = trim(token);
    if (token.empty()) continue;
    const auto colon = token.find(':');
    if (colon == std::string::npos)
      line_error(line, "entry '" + token + "' in '" + key +
                           "' must look like field:height");
    out.emplace_back(parse_double(trim(token.substr(0, colon)), line, key),
                     parse_double(trim(token.substr(colon + 1)), line, key));
  }
  return out;
}

std::string format_pair_list(const std::vector<std::pair<double, double>>& ps) {
  std::string out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i) out += "; ";
    out += g17(ps[i].first) + ":" + g17(ps[i].second);
  }
  return out;
}

// One config key: how to read it into a Scenario and how to echo it back.
// get returning nullopt omits the key from the serialized form (used for
// values whose absence is itself the default, like an unset R0).
struct KeySpec {
  std::string name;
  std::function<void(Scenario&, const std::string&, int)> set;
  std::function<std::optional<std::string>(const Scenario&)> get;
};

struct SectionSpec {
  std::string name;
  std::vector<KeySpec> keys;
};

using DoubleRef = std::function<double&(Scenario&)>;
using IntRef = std::function<int&(Scenario&)>;
using BoolRef = std::function<bool&(Scenario&)>;

KeySpec dkey(const std::string& name, DoubleRef ref) {
  return {name,
          [ref, name](Scenario& s, const std::string& v, int line) {
            ref(s) = parse_double(v, line, name);
          },
          [ref](const Scenario& s) {
            return g17(ref(const_cast<Scenario&>(s)));
          }};
}

KeySpec ikey(const std::string& name, IntRef ref) {
  return {name,
          [ref, name](Scenario& s, const std::string& v, int line) {
            ref(s) = static_cast<int>(parse_long(v, line, name));
          },
          [ref](const Scenario& s) {
            return std::to_string(ref(const_cast<Scenario&>(s)));
          }};
}

KeySpec bkey(const std::string& name, BoolRef ref) {
  return {name,
          [ref, name](Scenario& s, const std::string& v, int line) {
            ref(s) = parse_bool(v, line, name);
          },
          [ref](const Scenario& s) {
            return std::string(ref(const_cast<Scenario&>(s)) ? "true" : "false");
          }};
}

const std::vector<SectionSpec>& registry() {
  static const std::vector<SectionSpec> table = [] {
    std::vector<SectionSpec> t;

    t.push_back(
        {"run",
         {{"command",
           [](Scenario& s, const std::string& v, int line) {
             const auto& names = command_names();
             if (std::find(names.begin(), names.end(), v) == names.end())
               line_error(line, "unknown command '" + v + "'; nearest is '" +
                                    nearest_name(v, names) + "'");
             if (!s.command.empty() && s.command != v)
               line_error(line, "command '" + v + "' conflicts with '" +
                                    s.command + "'");
             s.command = v;
           },
           [](const Scenario& s) { return s.command; }},
          {"seed",
           [](Scenario& s, const std::string& v, int line) {
             const long x = parse_long(v, line, "seed");
             if (x < 0) line_error(line, "seed must be non-negative");
             s.seed = static_cast<unsigned long>(x);
           },
           [](const Scenario& s) { return std::to_string(s.seed); }}}});

    t.push_back(
        {"spin",
         {dkey("spin", [](Scenario& s) -> double& { return s.params.spin; }),
          dkey("D_over_kB",
               [](Scenario& s) -> double& { return s.params.D_over_kB; }),
          dkey("F_over_kB",
               [](Scenario& s) -> double& { return s.params.F_over_kB; }),
          dkey("C_over_kB",
               [](Scenario& s) -> double& { return s.params.C_over_kB; }),
          dkey("E_over_kB",
               [](Scenario& s) -> double& { return s.params.E_over_kB; }),
          dkey("K_coeff",
               [](Scenario& s) -> double& { return s.params.K_coeff; }),
          dkey("g_factor",
               [](Scenario& s) -> double& { return s.params.g_factor; })}});

    t.push_back(
        {"physical",
         {dkey("N0_eta",
               [](Scenario& s) -> double& { return s.physical.N0_eta; }),
          dkey("eta", [](Scenario& s) -> double& { return s.physical.eta; }),
          dkey("Omega",
               [](Scenario& s) -> double& { return s.physical.Omega; }),
          dkey("s_magnitude",
               [](Scenario& s) -> double& { return s.physical.s_magnitude; }),
          dkey("T2", [](Scenario& s) -> double& { return s.physical.T2; }),
          dkey("Tc", [](Scenario& s) -> double& { return s.physical.Tc; }),
          dkey("B0_dot",
               [](Scenario& s) -> double& { return s.physical.B0_dot; }),
          ikey("m", [](Scenario& s) -> int& { return s.physical.m; }),
          ikey("m_prime",
               [](Scenario& s) -> int& { return s.physical.m_prime; }),
          dkey("volume",
               [](Scenario& s) -> double& { return s.physical.volume; }),
          dkey("g_factor",
               [](Scenario& s) -> double& { return s.physical.g_factor; })}});

    SectionSpec dynamics{"dynamics", {}};
    dynamics.keys.push_back(bkey(
        "from_physical", [](Scenario& s) -> bool& { return s.from_physical; }));
    dynamics.keys.push_back(
        dkey("gamma", [](Scenario& s) -> double& { return s.dynamics.gamma; }));
    dynamics.keys.push_back(
        dkey("kappa", [](Scenario& s) -> double& { return s.dynamics.kappa; }));
    dynamics.keys.push_back(
        dkey("v", [](Scenario& s) -> double& { return s.dynamics.v; }));
    dynamics.keys.push_back(
        dkey("psi", [](Scenario& s) -> double& { return s.dynamics.psi; }));
    dynamics.keys.push_back(
        dkey("beta", [](Scenario& s) -> double& { return s.dynamics.beta; }));
    dynamics.keys.push_back(
        dkey("Z0", [](Scenario& s) -> double& { return s.dynamics.Z0; }));
    dynamics.keys.push_back(dkey(
        "theta0", [](Scenario& s) -> double& { return s.dynamics.theta0; }));
    dynamics.keys.push_back(
        {"h0_re",
         [](Scenario& s, const std::string& v, int line) {
           s.dynamics.h0 = {parse_double(v, line, "h0_re"), s.dynamics.h0.imag()};
         },
         [](const Scenario& s) { return g17(s.dynamics.h0.real()); }});
    dynamics.keys.push_back(
        {"h0_im",
         [](Scenario& s, const std::string& v, int line) {
           s.dynamics.h0 = {s.dynamics.h0.real(), parse_double(v, line, "h0_im")};
         },
         [](const Scenario& s) { return g17(s.dynamics.h0.imag()); }});
    dynamics.keys.push_back(
        {"R0_re",
         [](Scenario& s, const std::string& v, int line) {
           const double im = s.dynamics.R0 ? s.dynamics.R0->imag() : 0.0;
           s.dynamics.R0 = std::complex<double>(parse_double(v, line, "R0_re"), im);
         },
         [](const Scenario& s) -> std::optional<std::string> {
           if (!s.dynamics.R0) return std::nullopt;
           return g17(s.dynamics.R0->real());
         }});
    dynamics.keys.push_back(
        {"R0_im",
         [](Scenario& s, const std::string& v, int line) {
           const double re = s.dynamics.R0 ? s.dynamics.R0->real() : 0.0;
           s.dynamics.R0 = std::complex<double>(re, parse_double(v, line, "R0_im"));
         },
         [](const Scenario& s) -> std::optional<std::string> {
           if (!s.dynamics.R0) return std::nullopt;
           return g17(s.dynamics.R0->imag());
         }});
    dynamics.keys.push_back(dkey(
        "tau_start", [](Scenario& s) -> double& { return s.dynamics.tau_start; }));
    dynamics.keys.push_back(dkey(
        "tau_end", [](Scenario& s) -> double& { return s.dynamics.tau_end; }));
    dynamics.keys.push_back(dkey(
        "rel_tol", [](Scenario& s) -> double& { return s.dynamics.rel_tol; }));
    dynamics.keys.push_back(dkey(
        "abs_tol", [](Scenario& s) -> double& { return s.dynamics.abs_tol; }));
    dynamics.keys.push_back(
        ikey("samples", [](Scenario& s) -> int& { return s.dynamics.samples; }));
    dynamics.keys.push_back(
        {"kappa_grid",
         [](Scenario& s, const std::string& v, int line) {
           s.kappa_grid = parse_double_list(v, line, "kappa_grid");
         },
         [](const Scenario& s) -> std::optional<std::string> {
           if (s.kappa_grid.empty()) return std::nullopt;
           return format_double_list(s.kappa_grid);
         }});
    t.push_back(std::move(dynamics));

    t.push_back(
        {"levels",
         {dkey("b_min", [](Scenario& s) -> double& { return s.levels_b_min; }),
          dkey("b_max", [](Scenario& s) -> double& { return s.levels_b_max; }),
          ikey("steps", [](Scenario& s) -> int& { return s.levels_steps; })}});

    t.push_back(
        {"crossings",
         {dkey("b_min",
               [](Scenario& s) -> double& { return s.crossings_b_min; }),
          dkey("b_max",
               [](Scenario& s) -> double& { return s.crossings_b_max; })}});

    t.push_back(
        {"hysteresis",
         {dkey("sweep_rate",
               [](Scenario& s) -> double& { return s.hyst_sweep_rate; }),
          dkey("temperature",
               [](Scenario& s) -> double& { return s.hyst_temperature; }),
          dkey("b_start",
               [](Scenario& s) -> double& { return s.hyst_b_start; }),
          dkey("b_end", [](Scenario& s) -> double& { return s.hyst_b_end; }),
          ikey("grid_points",
               [](Scenario& s) -> int& { return s.hyst_grid_points; }),
          bkey("rethermalize",
               [](Scenario& s) -> bool& { return s.hyst_rethermalize; })}});

    t.push_back(
        {"fit",
         {{"target_steps",
           [](Scenario& s, const std::string& v, int line) {
             s.fit.target_steps = parse_pair_list(v, line, "target_steps");
           },
           [](const Scenario& s) -> std::optional<std::string> {
             if (s.fit.target_steps.empty()) return std::nullopt;
             return format_pair_list(s.fit.target_steps);
           }},
          dkey("initial_C_over_kB",
               [](Scenario& s) -> double& { return s.fit.initial_C_over_kB; }),
          dkey("initial_E_over_kB",
               [](Scenario& s) -> double& { return s.fit.initial_E_over_kB; }),
          dkey("initial_K_coeff",
               [](Scenario& s) -> double& { return s.fit.initial_K_coeff; }),
          dkey("match_window",
               [](Scenario& s) -> double& { return s.fit.match_window; }),
          dkey("simplex_xtol",
               [](Scenario& s) -> double& { return s.fit.simplex_xtol; }),
          dkey("simplex_ftol",
               [](Scenario& s) -> double& { return s.fit.simplex_ftol; }),
          ikey("max_iterations",
               [](Scenario& s) -> int& { return s.fit.max_iterations; }),
          ikey("restarts", [](Scenario& s) -> int& { return s.fit.restarts; }),
          dkey("b_start", [](Scenario& s) -> double& { return s.fit.b_start; }),
          dkey("b_end", [](Scenario& s) -> double& { return s.fit.b_end; }),
          dkey("sweep_rate",
               [](Scenario& s) -> double& { return s.fit_sweep_rate; }),
          dkey("temperature",
               [](Scenario& s) -> double& { return s.fit_temperature; })}});

    t.push_back(
        {"t0scan",
         {dkey("b0", [](Scenario& s) -> double& { return s.t0scan_b0; }),
          dkey("t_min", [](Scenario& s) -> double& { return s.t0scan_t_min; }),
          dkey("t_max", [](Scenario& s) -> double& { return s.t0scan_t_max; }),
          ikey("t_steps", [](Scenario& s) -> int& { return s.t0scan_t_steps; }),
          ikey("m_min", [](Scenario& s) -> int& { return s.t0scan_m_min; }),
          ikey("m_max", [](Scenario& s) -> int& { return s.t0scan_m_max; }),
          dkey("total_density",
               [](Scenario& s) -> double& { return s.t0scan_total_density; }),
          dkey("eta", [](Scenario& s) -> double& { return s.t0scan_eta; }),
          dkey("omega",
               [](Scenario& s) -> double& { return s.t0scan_omega; })}});

    t.push_back(
        {"peaks",
         {{"mode",
           [](Scenario& s, const std::string& v, int line) {
             if (v != "coherent" && v != "rate")
               line_error(line, "mode must be 'coherent' or 'rate', got '" +
                                    v + "'");
             s.peaks_mode = v;
           },
           [](const Scenario& s) { return s.peaks_mode; }},
          {"v_grid",
           [](Scenario& s, const std::string& v, int line) {
             s.peaks_v = parse_double_list(v, line, "v_grid");
           },
           [](const Scenario& s) { return format_double_list(s.peaks_v); }}}});

    return t;
  }();
  return table;
}

const SectionSpec* find_section(const std::string& name) {
  for (const auto& sec : registry())
    if (sec.name == name) return &sec;
  return nullptr;
}

// Out-of-the-box behavior per command; explicit config lines override these.
void apply_command_defaults(Scenario& s) {
  if (s.command == "dynamics") {
    s.dynamics.v = 0.2;
    s.kappa_grid = {0.2, 1.0, 5.0};
  } else if (s.command == "maser") {
    s.dynamics.gamma = 1.0;
    s.dynamics.kappa = 0.1;
    s.dynamics.v = 0.2;
    s.dynamics.h0 = {0.01, 0.0};
    s.dynamics.tau_start = -50.0;
    s.dynamics.tau_end = 300.0;
  } else if (s.command == "peaks") {
    s.dynamics.gamma = 0.1;
    s.dynamics.kappa = 1.0;
    s.dynamics.theta0 = 0.05;
    s.dynamics.samples = 8001;
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text,
                        const std::string& cli_command) {
  struct Item {
    int line;
    std::string section, key, value;
  };
  std::vector<Item> items;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        line_error(line_no, "unterminated section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (!find_section(section)) {
        std::vector<std::string> names;
        for (const auto& sec : registry()) names.push_back(sec.name);
        line_error(line_no, "unknown section [" + section + "]; nearest is [" +
                                nearest_name(section, names) + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      line_error(line_no, "expected 'key = value', got '" + line + "'");
    if (section.empty())
      line_error(line_no, "key outside any [section]");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) line_error(line_no, "missing key before '='");
    items.push_back({line_no, section, key, trim(line.substr(eq + 1))});
  }

  // Resolve the command first: per-command defaults must be in place before
  // any other key applies.
  std::string text_command;
  for (const Item& item : items) {
    if (item.section != "run" || item.key != "command") continue;
    if (!text_command.empty() && text_command != item.value)
      line_error(item.line, "conflicting command '" + item.value + "' after '" +
                                text_command + "'");
    text_command = item.value;
  }
  if (!cli_command.empty() && !text_command.empty() &&
      cli_command != text_command)
    throw ValidationError("config sets command = " + text_command +
                          " but the command line says " + cli_command);
  const std::string command =
      cli_command.empty() ? text_command : cli_command;
  if (command.empty())
    throw ValidationError(
        "no command: pass one on the command line or set it under [run]");
  {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end())
      throw ValidationError("unknown command '" + command + "'; nearest is '" +
                            nearest_name(command, names) + "'");
  }

  Scenario s;
  s.command = command;
  apply_command_defaults(s);

  for (const Item& item : items) {
    const SectionSpec* sec = find_section(item.section);
    const KeySpec* spec = nullptr;
    for (const auto& key : sec->keys)
      if (key.name == item.key) {
        spec = &key;
        break;
      }
    if (!spec) {
      std::vector<std::string> names;
      for (const auto& key : sec->keys) names.push_back(key.name);
      line_error(item.line, "unknown key '" + item.key + "' in [" +
                                item.section + "]; nearest is '" +
                                nearest_name(item.key, names) + "'");
    }
    spec->set(s, item.value, item.line);
  }

  // Eager validation so a bad scenario never reaches the runner.
  s.params.validate();
  s.dynamics.validate();
  if (s.from_physical) s.physical.validate();
  return s;
}

std::string serialize_scenario(const Scenario& s) {
  std::string out;
  for (const auto& sec : registry()) {
    out += "[" + sec.name + "]\n";
    for (const auto& key : sec.keys) {
      const auto value = key.get(s);
      if (value) out += key.name + " = " + *value + "\n";
    }
    out += "\n";
  }
  return out;
}

namespace {

// Collects every path the run creates so a failure can undo the partial run.
class FileTracker {
 public:
  explicit FileTracker(fs::path dir) : dir_(std::move(dir)) {}

  std::ofstream open(const std::string& name) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    if (!out)
      throw ValidationError("cannot write " + path.string() +
                            "; is the output directory writable?");
    created_.push_back(path);
    return out;
  }

  void cleanup() {
    std::error_code ec;
    for (const auto& path : created_) fs::remove(path, ec);
  }

 private:
  fs::path dir_;
  std::vector<fs::path> created_;
};

int worker_cap() {
  if (const char* env = std::getenv("SPINCAVITY_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*env == '\0' || *end != '\0' || n < 1)
      throw ValidationError(
          "SPINCAVITY_THREADS must be a positive integer, got '" +
          std::string(env) + "'");
    return static_cast<int>(n);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(0..n-1) on up to SPINCAVITY_THREADS workers. Results must be
// written to per-index slots; file output stays with the caller so bytes do
// not depend on scheduling.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(worker_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mtx;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mtx);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<double> grid_between(double a, double b, int n, const char* what) {
  if (n < 2 || !(b > a))
    throw ValidationError(std::string(what) +
                          " grid needs at least 2 steps and max > min");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    g[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  g.back() = b;
  return g;
}

void write_trajectory_csv(std::ofstream& out, const Trajectory& t) {
  out << "tau,Z,re_R,im_R,re_h,im_h,intensity\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    out << g17(t.tau[i]) << ',' << g17(t.Z[i]) << ',' << g17(t.re_R[i]) << ','
        << g17(t.im_R[i]) << ',' << g17(t.re_h[i]) << ',' << g17(t.im_h[i])
        << ',' << g17(t.intensity[i]) << '\n';
}

std::string stats_line(const std::string& label, const IntegratorStats& st) {
  return label + ": accepted=" + std::to_string(st.accepted) +
         " rejected=" + std::to_string(st.rejected) +
         " rhs_evals=" + std::to_string(st.rhs_evals);
}

// %g keeps grid values like 0.2 readable and stable inside file names.
std::string gshort(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

DynamicsConfig resolved_dynamics(const Scenario& s, std::vector<std::string>& notes) {
  DynamicsConfig cfg = s.dynamics;
  if (s.from_physical) {
    const DimensionlessParams dp = derive_dimensionless(s.physical);
    cfg.gamma = dp.config.gamma;
    cfg.kappa = dp.config.kappa;
    cfg.v = dp.config.v;
    notes.push_back("T0_seconds = " + g17(dp.T0));
    notes.push_back("derived gamma = " + g17(cfg.gamma) +
                    ", kappa = " + g17(cfg.kappa) + ", v = " + g17(cfg.v));
  }
  return cfg;
}

void run_levels(const Scenario& s, FileTracker& files,
                std::vector<std::string>& names,
                std::vector<std::string>& notes) {
  const auto grid =
      grid_between(s.levels_b_min, s.levels_b_max, s.levels_steps, "levels");
  const LevelDiagram diagram = level_diagram(s.params, grid);
  auto out = files.open("levels.csv");
  names.push_back("levels.csv");
  out << "B0_tesla";
  for (int k = 0; k < diagram.energies.cols(); ++k) out << ",E" << k;
  out << '\n';
  for (std::size_t i = 0; i < diagram.field.size(); ++i) {
    out << g17(diagram.field[i]);
    for (int k = 0; k < diagram.energies.cols(); ++k)
      out << ',' << g17(diagram.energies(static_cast<int>(i), k));
    out << '\n';
  }
  notes.push_back("levels: " + std::to_string(diagram.field.size()) +
                  " fields x " + std::to_string(diagram.energies.cols()) +
                  " levels (joules)");
}

void run_crossings(const Scenario& s, FileTracker& files,
                   std::vector<std::string>& names,
                   std::vector<std::string>& notes) {
  std::vector<SkippedPair> skipped;
  const auto catalog = build_crossing_catalog(s.params, s.crossings_b_min,
                                              s.crossings_b_max, {}, &skipped);
  auto out = files.open("crossings.csv");
  names.push_back("crossings.csv");
  out << "m,m_prime,B0_star_tesla,delta0_joules,epsilon0_joules\n";
  for (const auto& rec : catalog)
    out << rec.m << ',' << rec.m_prime << ',' << g17(rec.B0_star) << ','
        << g17(rec.delta0) << ',' << g17(rec.epsilon0) << '\n';
  for (const auto& skip : skipped)
    notes.push_back("skipped pair (" + std::to_string(skip.m) + ", " +
                    std::to_string(skip.m_prime) + "): " + skip.reason);
  notes.push_back("crossings: " + std::to_string(catalog.size()) +
                  " records");
}

void run_hysteresis(const Scenario& s, FileTracker& files,
                    std::vector<std::string>& names,
                    std::vector<std::string>& notes) {
  HysteresisOptions opts;
  opts.grid_points = s.hyst_grid_points;
  opts.rethermalize = s.hyst_rethermalize;
  const HysteresisResult result =
      simulate_hysteresis(s.params, s.hyst_sweep_rate, s.hyst_temperature,
                          s.hyst_b_start, s.hyst_b_end, opts);
  auto out = files.open("hysteresis.csv");
  names.push_back("hysteresis.csv");
  out << "B0_tesla,magnetization\n";
  for (std::size_t i = 0; i < result.field_grid.size(); ++i)
    out << g17(result.field_grid[i]) << ',' << g17(result.magnetization[i])
        << '\n';
  auto steps = files.open("hysteresis_steps.csv");
  names.push_back("hysteresis_steps.csv");
  steps << "m,m_prime,B0_star_tesla,probability,population_moved,"
           "magnetization_jump\n";
  for (const auto& step : result.step_records)
    steps << step.record.m << ',' << step.record.m_prime << ','
          << g17(step.record.B0_star) << ',' << g17(step.probability) << ','
          << g17(step.population_moved) << ',' << g17(step.magnetization_jump)
          << '\n';
  notes.push_back("hysteresis: " + std::to_string(result.step_records.size()) +
                  " transfer events");
}

void run_fit(const Scenario& s, FileTracker& files,
             std::vector<std::string>& names, std::vector<std::string>& notes) {
  FitConfig fit = s.fit;
  if (fit.target_steps.empty()) {
    // Self-targets: the three largest simulated steps of the current
    // parameters, so the default scenario is a round-trip demonstration.
    HysteresisOptions opts;
    const HysteresisResult truth =
        simulate_hysteresis(s.params, s.fit_sweep_rate, s.fit_temperature,
                            fit.b_start, fit.b_end, opts);
    auto steps = truth.step_records;
    std::sort(steps.begin(), steps.end(),
              [](const HysteresisStep& a, const HysteresisStep& b) {
                return std::abs(a.magnetization_jump) >
                       std::abs(b.magnetization_jump);
              });
    const std::size_t take = std::min<std::size_t>(3, steps.size());
    for (std::size_t i = 0; i < take; ++i)
      fit.target_steps.emplace_back(steps[i].record.B0_star,
                                    steps[i].magnetization_jump);
    std::sort(fit.target_steps.begin(), fit.target_steps.end());
    notes.push_back("fit: synthesized " + std::to_string(take) +
                    " self-targets from the current [spin] parameters");
  }
  if (fit.target_steps.empty())
    throw ValidationError("fit: no target steps and none could be synthesized");

  if (fit.initial_C_over_kB == 0.0 && fit.initial_E_over_kB == 0.0 &&
      fit.initial_K_coeff == 0.0) {
    fit.initial_C_over_kB = 1.3 * s.params.C_over_kB;
    fit.initial_E_over_kB = 0.9 * s.params.E_over_kB;
    fit.initial_K_coeff = 1.4 * s.params.K_coeff;
  }
  if (s.seed != 0) {
    std::mt19937_64 gen(s.seed);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);
    fit.initial_C_over_kB *= jitter(gen);
    fit.initial_E_over_kB *= jitter(gen);
    fit.initial_K_coeff *= jitter(gen);
    notes.push_back("fit: initial guess jittered with seed " +
                    std::to_string(s.seed));
  }
  notes.push_back("fit: starting from C = " + g17(fit.initial_C_over_kB) +
                  ", E = " + g17(fit.initial_E_over_kB) +
                  ", K_coeff = " + g17(fit.initial_K_coeff));

  auto targets = files.open("fit_targets.csv");
  names.push_back("fit_targets.csv");
  targets << "B0_tesla,step_height\n";
  for (const auto& [field, height] : fit.target_steps)
    targets << g17(field) << ',' << g17(height) << '\n';

  const FitResult result =
      fit_anisotropy_params(fit, s.params, s.fit_sweep_rate, s.fit_temperature);
  auto out = files.open("fit_result.csv");
  names.push_back("fit_result.csv");
  out << "C_over_kB,E_over_kB,K_coeff,residual,iterations,converged\n";
  out << g17(result.C_over_kB) << ',' << g17(result.E_over_kB) << ','
      << g17(result.K_coeff) << ',' << g17(result.residual) << ','
      << result.iterations << ',' << (result.converged ? 1 : 0) << '\n';
  notes.push_back("fit: residual = " + g17(result.residual) + " after " +
                  std::to_string(result.iterations) + " iterations");
}

void run_dynamics(const Scenario& s, FileTracker& files,
                  std::vector<std::string>& names,
                  std::vector<std::string>& notes) {
  const DynamicsConfig base = resolved_dynamics(s, notes);
  std::vector<double> kappas = s.kappa_grid;
  if (kappas.empty()) kappas.push_back(base.kappa);
  std::vector<Trajectory> runs(kappas.size());
  parallel_for(static_cast<int>(kappas.size()), [&](int i) {
    DynamicsConfig cfg = base;
    cfg.kappa = kappas[static_cast<std::size_t>(i)];
    runs[static_cast<std::size_t>(i)] = integrate_bloch_cavity(cfg);
  });
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string name = kappas.size() == 1
                                 ? std::string("trajectory.csv")
                                 : "trajectory_kappa_" + gshort(kappas[i]) +
                                       ".csv";
    auto out = files.open(name);
    names.push_back(name);
    write_trajectory_csv(out, runs[i]);
    notes.push_back(stats_line(name, runs[i].stats));
    if (s.from_physical)
      notes.push_back(name + ": emitted_energy_J = " +
                      g17(emitted_energy(runs[i], s.physical)));
  }
}

void run_maser(const Scenario& s, FileTracker& files,
               std::vector<std::string>& names,
               std::vector<std::string>& notes) {
  const DynamicsConfig cfg = resolved_dynamics(s, notes);
  const Trajectory traj = integrate_rate_equations(cfg);
  auto out = files.open("trajectory.csv");
  names.push_back("trajectory.csv");
  write_trajectory_csv(out, traj);
  notes.push_back(stats_line("trajectory.csv", traj.stats));
  if (s.from_physical)
    notes.push_back("trajectory.csv: emitted_energy_J = " +
                    g17(emitted_energy(traj, s.physical)));
}

void run_t0scan(const Scenario& s, FileTracker& files,
                std::vector<std::string>& names,
                std::vector<std::string>& notes) {
  if (s.t0scan_m_min > s.t0scan_m_max)
    throw ValidationError("t0scan: m_min must not exceed m_max");
  std::vector<CrossingRecord> catalog;
  for (int m = s.t0scan_m_min; m <= s.t0scan_m_max; ++m) {
    const int m_prime = -m - 2;  // pairs that cross at positive field
    if (m == m_prime) continue;
    CrossingRecord rec;
    rec.m = m;
    rec.m_prime = m_prime;
    rec.B0_star = crossing_field_h0(m, m_prime, s.params);
    catalog.push_back(rec);
  }
  std::vector<double> grid;
  if (s.t0scan_t_steps == 1)
    grid.push_back(s.t0scan_t_min);
  else
    grid = grid_between(s.t0scan_t_min, s.t0scan_t_max, s.t0scan_t_steps,
                        "t0scan temperature");
  T0ScanContext ctx;
  ctx.total_density = s.t0scan_total_density;
  ctx.eta = s.t0scan_eta;
  ctx.Omega = s.t0scan_omega;
  ctx.g_factor = s.params.g_factor;
  const auto rows = t0_scan(s.params, s.t0scan_b0, grid, catalog, ctx);
  auto out = files.open("t0scan.csv");
  names.push_back("t0scan.csv");
  out << "temperature_K,m,m_prime,T0_seconds\n";
  for (const auto& row : rows)
    out << g17(row.temperature) << ',' << row.m << ',' << row.m_prime << ','
        << g17(row.T0_min) << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].m != rows[i - 1].m || rows[i].m_prime != rows[i - 1].m_prime)
      notes.push_back("t0scan: winner switches to (" +
                      std::to_string(rows[i].m) + ", " +
                      std::to_string(rows[i].m_prime) + ") at " +
                      g17(rows[i].temperature) + " K");
}

void run_peaks(const Scenario& s, FileTracker& files,
               std::vector<std::string>& names,
               std::vector<std::string>& notes) {
  if (s.from_physical)
    throw ValidationError(
        "peaks: from_physical conflicts with the sweep-rate grid; set "
        "[dynamics] values directly");
  const bool rate = s.peaks_mode == "rate";
  for (double v : s.peaks_v)
    if (!(v > 0.0))
      throw ValidationError("peaks: every v in the grid must be positive");

  std::vector<PeakReport> reports(s.peaks_v.size());
  parallel_for(static_cast<int>(s.peaks_v.size()), [&](int i) {
    const double v = s.peaks_v[static_cast<std::size_t>(i)];
    DynamicsConfig cfg = s.dynamics;
    cfg.v = v;
    if (rate) {
      // Start where the Lorentzian tail is negligible and keep the gain
      // window plus ring-down inside the span.
      cfg.tau_start = -10.0 * cfg.gamma / v;
      cfg.tau_end = 60.0 * cfg.gamma / v;
      reports[static_cast<std::size_t>(i)] =
          dM_dB0_curve(integrate_rate_equations(cfg), v);
    } else {
      cfg.tau_start = -50.0;
      cfg.tau_end = 100.0 + 60.0 / v;
      reports[static_cast<std::size_t>(i)] =
          dM_dB0_curve(integrate_bloch_cavity(cfg), v);
    }
  });

  auto out = files.open("peaks.csv");
  names.push_back("peaks.csv");
  out << "v,peak_abscissa,peak_height\n";
  for (const auto& rep : reports)
    out << g17(rep.v) << ',' << g17(rep.peak_abscissa) << ','
        << g17(rep.peak_height) << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string name = "peak_curve_v_" + gshort(reports[i].v) + ".csv";
    auto curve = files.open(name);
    names.push_back(name);
    curve << "field,dM_dB0\n";
    for (std::size_t k = 0; k < reports[i].field.size(); ++k)
      curve << g17(reports[i].field[k]) << ',' << g17(reports[i].curve[k])
            << '\n';
    notes.push_back("peaks: v = " + gshort(reports[i].v) + " has " +
                    std::to_string(reports[i].sign_changes) +
                    " sign changes");
  }
}

}  // namespace

std::vector<std::string> run_scenario(const Scenario& s,
                                      const std::string& out_dir) {
  const auto wall_start = std::chrono::steady_clock::now();
  worker_cap();  // reject a malformed SPINCAVITY_THREADS even on serial paths
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw ValidationError("cannot create output directory " + out_dir + ": " +
                          ec.message());

  FileTracker files{fs::path(out_dir)};
  std::vector<std::string> names;
  std::vector<std::string> notes;
  try {
    if (s.command == "levels")
      run_levels(s, files, names, notes);
    else if (s.command == "crossings")
      run_crossings(s, files, names, notes);
    else if (s.command == "hysteresis")
      run_hysteresis(s, files, names, notes);
    else if (s.command == "fit")
      run_fit(s, files, names, notes);
    else if (s.command == "dynamics")
      run_dynamics(s, files, names, notes);
    else if (s.command == "maser")
      run_maser(s, files, names, notes);
    else if (s.command == "t0scan")
      run_t0scan(s, files, names, notes);
    else if (s.command == "peaks")
      run_peaks(s, files, names, notes);
    else
      throw ValidationError("unknown command '" + s.command + "'");

    const auto wall_end = std::chrono::steady_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        wall_end - wall_start)
                        .count();
    auto meta = files.open("run_meta.txt");
    meta << "# spincavity run metadata\n";
    meta << "command = " << s.command << "\n";
    meta << "wall_time_ms = " << ms << "\n";
    meta << "data_files =";
    for (const auto& name : names) meta << ' ' << name;
    meta << "\n";
    for (const auto& note : notes) meta << "note: " << note << "\n";
    meta << "\n# resolved scenario (parseable)\n";
    meta << serialize_scenario(s);
  } catch (...) {
    files.cleanup();
    throw;
  }
  return names;
}

}  // namespace spincavity
