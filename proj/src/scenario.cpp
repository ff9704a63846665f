#include "blochsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "blochsim/unraveling.hpp"

namespace blochsim {

// ---------------------------------------------------------------------------
// parsing

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<double> parse_reals(const std::string& text, bool& ok) {
    std::vector<double> values;
    std::istringstream in(text);
    std::string token;
    ok = true;
    while (in >> token) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(token, &used));
            if (used != token.size()) ok = false;
        } catch (const std::exception&) {
            ok = false;
        }
    }
    return values;
}

struct Collector {
    std::vector<ParseIssue> issues;
    void add(int line, std::string message) { issues.push_back({line, std::move(message)}); }
    bool failed() const { return !issues.empty(); }
};

// values are whitespace-separated re/im pairs, row-major
bool parse_complex_matrix(const std::string& text, int n, Eigen::MatrixXcd& out) {
    bool ok = true;
    const auto values = parse_reals(text, ok);
    if (!ok || static_cast<int>(values.size()) != 2 * n * n) return false;
    out.resize(n, n);
    int idx = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c, idx += 2)
            out(r, c) = std::complex<double>(values[idx], values[idx + 1]);
    return true;
}

struct RawLine {
    int number;
    std::string key;
    std::string value;
};

struct RawSection {
    std::string name;  // "" for the top-level block
    int line;
    std::vector<RawLine> entries;
};

std::vector<RawSection> split_sections(const std::string& text, Collector& errors) {
    std::vector<RawSection> sections;
    sections.push_back({"", 0, {}});
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.add(number, "unterminated section header");
                continue;
            }
            sections.push_back({trim(line.substr(1, line.size() - 2)), number, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.add(number, "expected `key = value`");
            continue;
        }
        sections.back().entries.push_back(
            {number, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
    }
    return sections;
}

class ScenarioBuilder {
  public:
    Scenario parse(const std::string& text) {
        auto sections = split_sections(text, errors_);
        for (const auto& section : sections) {
            if (section.name.empty())
                top_level(section);
            else if (section.name == "f")
                f_section(section);
            else if (section.name == "hamiltonian")
                hamiltonian_section(section);
            else if (section.name == "lindblad")
                lindblad_section(section);
            else if (section.name == "initial")
                initial_section(section);
            else if (section.name == "mc")
                mc_section(section);
            else if (section.name == "series")
                series_section(section);
            else if (section.name == "perturbation")
                perturbation_section(section);
            else if (section.name == "compare")
                compare_section(section);
            else
                errors_.add(section.line, "unknown section [" + section.name + "]");
        }
        cross_checks();
        if (errors_.failed()) throw ScenarioError(std::move(errors_.issues));
        return std::move(scenario_);
    }

  private:
    Scenario scenario_;
    Collector errors_;
    int r0_line_ = 0, rho0_line_ = 0;
    std::vector<std::pair<int, std::string>> pending_bloch_;  // line, raw text

    double real_value(const RawLine& entry, bool& ok) {
        bool parsed = true;
        auto values = parse_reals(entry.value, parsed);
        if (!parsed || values.size() != 1) {
            errors_.add(entry.number, "key `" + entry.key + "` expects one real number");
            ok = false;
            return 0.0;
        }
        ok = true;
        return values[0];
    }

    long long int_value(const RawLine& entry, bool& ok) {
        try {
            std::size_t used = 0;
            long long v = std::stoll(entry.value, &used);
            if (used != entry.value.size()) throw std::invalid_argument("trailing");
            ok = true;
            return v;
        } catch (const std::exception&) {
            errors_.add(entry.number, "key `" + entry.key + "` expects an integer");
            ok = false;
            return 0;
        }
    }

    void top_level(const RawSection& section) {
        for (const auto& entry : section.entries) {
            bool ok = true;
            if (entry.key == "name") {
                scenario_.name = entry.value;
            } else if (entry.key == "dimension") {
                const long long n = int_value(entry, ok);
                if (ok && n < 2)
                    errors_.add(entry.number, "dimension must be >= 2");
                else if (ok)
                    scenario_.dimension = static_cast<int>(n);
            } else if (entry.key == "convention") {
                if (entry.value == "trace2")
                    scenario_.convention = Convention::trace2;
                else if (entry.value == "custom-f")
                    scenario_.convention = Convention::custom_f;
                else
                    errors_.add(entry.number, "convention must be trace2 or custom-f");
            } else if (entry.key == "picture") {
                if (entry.value == "heisenberg")
                    scenario_.picture = Picture::heisenberg;
                else if (entry.value == "schroedinger")
                    scenario_.picture = Picture::schroedinger;
                else
                    errors_.add(entry.number, "picture must be heisenberg or schroedinger");
            } else if (entry.key == "method") {
                scenario_.method = entry.value;
            } else if (entry.key == "t_final") {
                const double v = real_value(entry, ok);
                if (ok && v <= 0.0)
                    errors_.add(entry.number, "t_final must be positive");
                else if (ok)
                    scenario_.t_final = v;
            } else if (entry.key == "dt") {
                const double v = real_value(entry, ok);
                if (ok && v <= 0.0)
                    errors_.add(entry.number, "dt must be positive");
                else if (ok)
                    scenario_.dt = v;
            } else if (entry.key == "output_stride") {
                const long long v = int_value(entry, ok);
                if (ok && v < 1)
                    errors_.add(entry.number, "output_stride must be >= 1");
                else if (ok)
                    scenario_.output_stride = static_cast<int>(v);
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "`");
            }
        }
    }

    void f_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            if (entry.key != "entry") {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [f]");
                continue;
            }
            bool ok = true;
            auto values = parse_reals(entry.value, ok);
            if (!ok || values.size() != 4) {
                errors_.add(entry.number, "f entry expects `i j k value` (1-based indices)");
                continue;
            }
            std::array<int, 3> idx;
            bool integral = true;
            for (int c = 0; c < 3; ++c) {
                idx[c] = static_cast<int>(std::lround(values[c])) - 1;
                if (std::abs(values[c] - std::lround(values[c])) > 1e-12 || idx[c] < 0)
                    integral = false;
            }
            if (!integral) {
                errors_.add(entry.number, "f entry indices must be positive integers");
                continue;
            }
            scenario_.f_indices.push_back(idx);
            scenario_.f_values.push_back(values[3]);
        }
    }

    bool operator_entry(const RawLine& entry, OperatorSpec& spec, bool& seen) {
        if (entry.key == "matrix") {
            if (seen) errors_.add(entry.number, "operator given twice");
            seen = true;
            spec.is_matrix = true;
            if (scenario_.dimension < 2) {
                errors_.add(entry.number, "matrix given before a valid dimension");
                return false;
            }
            if (!parse_complex_matrix(entry.value, scenario_.dimension, spec.matrix))
                errors_.add(entry.number,
                            "matrix expects " +
                                std::to_string(2 * scenario_.dimension * scenario_.dimension) +
                                " numbers (row-major re/im pairs)");
            return true;
        }
        if (entry.key == "bloch") {
            if (seen) errors_.add(entry.number, "operator given twice");
            seen = true;
            spec.is_matrix = false;
            bool ok = true;
            auto values = parse_reals(entry.value, ok);
            const int expect = scenario_.bloch_dim();
            if (!ok || (scenario_.dimension >= 2 && static_cast<int>(values.size()) != expect)) {
                errors_.add(entry.number, "bloch expects " + std::to_string(expect) +
                                              " real coefficients");
                return true;
            }
            spec.bloch = Eigen::Map<Eigen::VectorXd>(values.data(),
                                                     static_cast<Eigen::Index>(values.size()));
            return true;
        }
        return false;
    }

    GammaProfile gamma_entry(const RawLine& entry) {
        std::istringstream in(entry.value);
        std::string kind;
        in >> kind;
        std::string rest;
        std::getline(in, rest);
        bool ok = true;
        auto values = parse_reals(rest, ok);
        try {
            if (kind == "constant" && ok && values.size() == 1)
                return GammaProfile::constant(values[0]);
            if (kind == "exponential" && ok && values.size() == 2)
                return GammaProfile::exponential_decay(values[0], values[1]);
            if (kind == "table" && ok && values.size() >= 4 && values.size() % 2 == 0) {
                std::vector<double> times, vals;
                for (std::size_t i = 0; i < values.size(); i += 2) {
                    times.push_back(values[i]);
                    vals.push_back(values[i + 1]);
                }
                return GammaProfile::tabulated(std::move(times), std::move(vals));
            }
        } catch (const std::exception& e) {
            errors_.add(entry.number, std::string("invalid gamma profile: ") + e.what());
            return GammaProfile::constant(0.0);
        }
        errors_.add(entry.number,
                    "gamma expects `constant g0`, `exponential g0 tau` or `table t v ...`");
        return GammaProfile::constant(0.0);
    }

    void hamiltonian_section(const RawSection& section) {
        if (scenario_.hamiltonian) {
            errors_.add(section.line, "duplicate [hamiltonian] section");
            return;
        }
        OperatorSpec spec;
        bool seen = false;
        for (const auto& entry : section.entries)
            if (!operator_entry(entry, spec, seen))
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [hamiltonian]");
        if (!seen)
            errors_.add(section.line, "[hamiltonian] needs a `matrix` or `bloch` entry");
        else
            scenario_.hamiltonian = std::move(spec);
    }

    void lindblad_section(const RawSection& section) {
        LindbladSpec spec;
        bool seen_op = false, seen_gamma = false;
        for (const auto& entry : section.entries) {
            if (operator_entry(entry, spec.op, seen_op)) continue;
            if (entry.key == "gamma") {
                seen_gamma = true;
                spec.gamma = gamma_entry(entry);
                continue;
            }
            errors_.add(entry.number, "unknown key `" + entry.key + "` in [lindblad]");
        }
        if (!seen_op) {
            errors_.add(section.line, "[lindblad] needs a `matrix` or `bloch` entry");
            return;
        }
        if (!seen_gamma) spec.gamma = GammaProfile::constant(1.0);
        scenario_.lindblads.push_back(std::move(spec));
    }

    void initial_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            if (entry.key == "r0") {
                r0_line_ = entry.number;
                bool ok = true;
                auto values = parse_reals(entry.value, ok);
                if (!ok || (scenario_.dimension >= 2 &&
                            static_cast<int>(values.size()) != scenario_.bloch_dim())) {
                    errors_.add(entry.number,
                                "r0 expects " + std::to_string(scenario_.bloch_dim()) +
                                    " real components");
                    continue;
                }
                scenario_.r0 = Eigen::Map<Eigen::VectorXd>(
                    values.data(), static_cast<Eigen::Index>(values.size()));
            } else if (entry.key == "rho0") {
                rho0_line_ = entry.number;
                Eigen::MatrixXcd m;
                if (scenario_.dimension < 2) {
                    errors_.add(entry.number, "rho0 given before a valid dimension");
                    continue;
                }
                if (!parse_complex_matrix(entry.value, scenario_.dimension, m)) {
                    errors_.add(entry.number, "rho0 expects row-major re/im pairs");
                    continue;
                }
                scenario_.rho0 = std::move(m);
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [initial]");
            }
        }
    }

    void mc_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            bool ok = true;
            if (entry.key == "trajectories") {
                const long long v = int_value(entry, ok);
                if (ok && v < 1)
                    errors_.add(entry.number, "trajectories must be >= 1");
                else if (ok)
                    scenario_.mc_trajectories = static_cast<int>(v);
            } else if (entry.key == "seed") {
                try {
                    scenario_.mc_seed = std::stoull(entry.value);
                } catch (const std::exception&) {
                    errors_.add(entry.number, "seed expects an unsigned integer");
                }
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [mc]");
            }
        }
    }

    void series_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            bool ok = true;
            if (entry.key == "order") {
                const long long v = int_value(entry, ok);
                if (ok && v < 0)
                    errors_.add(entry.number, "order must be >= 0");
                else if (ok)
                    scenario_.series_order = static_cast<int>(v);
            } else if (entry.key == "nodes") {
                const long long v = int_value(entry, ok);
                if (ok && (v < 2 || v > 128))
                    errors_.add(entry.number, "nodes must be in [2, 128]");
                else if (ok)
                    scenario_.series_nodes = static_cast<int>(v);
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [series]");
            }
        }
    }

    void perturbation_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            bool ok = true;
            if (entry.key == "order") {
                const long long v = int_value(entry, ok);
                if (ok && (v < 0 || v > 2))
                    errors_.add(entry.number, "perturbation order must be 0, 1 or 2");
                else if (ok)
                    scenario_.perturbation_order = static_cast<int>(v);
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [perturbation]");
            }
        }
    }

    void compare_section(const RawSection& section) {
        for (const auto& entry : section.entries) {
            bool ok = true;
            if (entry.key == "methods") {
                std::istringstream in(entry.value);
                std::string method;
                scenario_.compare_methods.clear();
                while (in >> method) scenario_.compare_methods.push_back(method);
                if (scenario_.compare_methods.size() < 2)
                    errors_.add(entry.number, "compare needs at least two methods");
            } else if (entry.key == "tolerance") {
                const double v = real_value(entry, ok);
                if (ok && v <= 0.0)
                    errors_.add(entry.number, "tolerance must be positive");
                else if (ok)
                    scenario_.compare_tolerance = v;
            } else if (entry.key == "se_mult") {
                const double v = real_value(entry, ok);
                if (ok && v <= 0.0)
                    errors_.add(entry.number, "se_mult must be positive");
                else if (ok)
                    scenario_.compare_se_mult = v;
            } else {
                errors_.add(entry.number, "unknown key `" + entry.key + "` in [compare]");
            }
        }
    }

    void cross_checks() {
        if (scenario_.name.empty()) errors_.add(0, "missing required key `name`");
        if (scenario_.dimension < 2) errors_.add(0, "missing required key `dimension`");
        if (scenario_.t_final <= 0.0) errors_.add(0, "missing required key `t_final`");
        if (scenario_.dt <= 0.0) errors_.add(0, "missing required key `dt`");

        static const std::vector<std::string> kMethods = {"formula", "series", "perturbation",
                                                          "mc", "oracle", "compare"};
        auto known = [&](const std::string& m) {
            return std::find(kMethods.begin(), kMethods.end(), m) != kMethods.end();
        };
        if (!known(scenario_.method))
            errors_.add(0, "unknown method `" + scenario_.method + "`");
        for (const auto& m : scenario_.compare_methods)
            if (!known(m) || m == "compare")
                errors_.add(0, "unknown compare method `" + m + "`");

        if (scenario_.r0 && scenario_.rho0)
            errors_.add(rho0_line_, "keys `r0` (line " + std::to_string(r0_line_) +
                                        ") and `rho0` are mutually exclusive");
        if (!scenario_.r0 && !scenario_.rho0)
            errors_.add(0, "missing [initial] section with `r0` or `rho0`");
        if (!scenario_.hamiltonian && scenario_.lindblads.empty())
            errors_.add(0, "scenario needs a [hamiltonian] or at least one [lindblad]");

        if (scenario_.convention == Convention::custom_f) {
            if (scenario_.f_indices.empty())
                errors_.add(0, "convention custom-f requires an [f] section");
            const int d = scenario_.bloch_dim();
            for (std::size_t e = 0; e < scenario_.f_indices.size(); ++e)
                for (int c = 0; c < 3; ++c)
                    if (scenario_.f_indices[e][c] >= d)
                        errors_.add(0, "f entry index out of range for dimension " +
                                           std::to_string(scenario_.dimension));
            if (scenario_.hamiltonian && scenario_.hamiltonian->is_matrix)
                errors_.add(0, "custom-f convention requires bloch-coefficient operators");
            for (const auto& lb : scenario_.lindblads)
                if (lb.op.is_matrix)
                    errors_.add(0, "custom-f convention requires bloch-coefficient operators");
            if (scenario_.rho0)
                errors_.add(0, "custom-f convention requires `r0` rather than `rho0`");
        } else if (!scenario_.f_indices.empty()) {
            errors_.add(0, "[f] entries require convention = custom-f");
        }

        if (scenario_.t_final > 0.0 && scenario_.dt > 0.0 &&
            scenario_.t_final < scenario_.dt * scenario_.output_stride)
            errors_.add(0, "t_final is smaller than one output interval");
    }
};

}  // namespace

ScenarioError::ScenarioError(std::vector<ParseIssue> issues)
    : std::runtime_error(render(issues)), issues_(std::move(issues)) {}

std::string ScenarioError::render(const std::vector<ParseIssue>& issues) {
    std::ostringstream out;
    out << "scenario validation failed (" << issues.size() << " issue"
        << (issues.size() == 1 ? "" : "s") << ")";
    for (const auto& issue : issues) {
        out << "\n  ";
        if (issue.line > 0) out << "line " << issue.line << ": ";
        out << issue.message;
    }
    return out.str();
}

Scenario parse_scenario(const std::string& text) { return ScenarioBuilder().parse(text); }

// ---------------------------------------------------------------------------
// serialization

namespace {

std::string fmt(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

void write_operator(std::ostream& out, const OperatorSpec& spec) {
    if (spec.is_matrix) {
        out << "matrix =";
        for (Eigen::Index r = 0; r < spec.matrix.rows(); ++r)
            for (Eigen::Index c = 0; c < spec.matrix.cols(); ++c)
                out << ' ' << fmt(spec.matrix(r, c).real()) << ' '
                    << fmt(spec.matrix(r, c).imag());
        out << '\n';
    } else {
        out << "bloch =";
        for (Eigen::Index i = 0; i < spec.bloch.size(); ++i) out << ' ' << fmt(spec.bloch(i));
        out << '\n';
    }
}

void write_gamma(std::ostream& out, const GammaProfile& gamma) {
    out << "gamma = ";
    switch (gamma.kind()) {
        case GammaProfile::Kind::constant:
            out << "constant " << fmt(gamma.g0());
            break;
        case GammaProfile::Kind::exponential_decay:
            out << "exponential " << fmt(gamma.g0()) << ' ' << fmt(gamma.tau());
            break;
        case GammaProfile::Kind::tabulated:
            out << "table";
            for (std::size_t i = 0; i < gamma.table_times().size(); ++i)
                out << ' ' << fmt(gamma.table_times()[i]) << ' ' << fmt(gamma.table_values()[i]);
            break;
    }
    out << '\n';
}

}  // namespace

std::string serialize_scenario(const Scenario& s) {
    std::ostringstream out;
    out << "name = " << s.name << '\n';
    out << "dimension = " << s.dimension << '\n';
    out << "convention = " << (s.convention == Convention::trace2 ? "trace2" : "custom-f")
        << '\n';
    out << "picture = "
        << (s.picture == Picture::heisenberg ? "heisenberg" : "schroedinger") << '\n';
    out << "method = " << s.method << '\n';
    out << "t_final = " << fmt(s.t_final) << '\n';
    out << "dt = " << fmt(s.dt) << '\n';
    out << "output_stride = " << s.output_stride << '\n';

    if (!s.f_indices.empty()) {
        out << "\n[f]\n";
        for (std::size_t e = 0; e < s.f_indices.size(); ++e)
            out << "entry = " << s.f_indices[e][0] + 1 << ' ' << s.f_indices[e][1] + 1 << ' '
                << s.f_indices[e][2] + 1 << ' ' << fmt(s.f_values[e]) << '\n';
    }
    if (s.hamiltonian) {
        out << "\n[hamiltonian]\n";
        write_operator(out, *s.hamiltonian);
    }
    for (const auto& lb : s.lindblads) {
        out << "\n[lindblad]\n";
        write_operator(out, lb.op);
        write_gamma(out, lb.gamma);
    }
    out << "\n[initial]\n";
    if (s.r0) {
        out << "r0 =";
        for (Eigen::Index i = 0; i < s.r0->size(); ++i) out << ' ' << fmt((*s.r0)(i));
        out << '\n';
    } else if (s.rho0) {
        out << "rho0 =";
        for (Eigen::Index r = 0; r < s.rho0->rows(); ++r)
            for (Eigen::Index c = 0; c < s.rho0->cols(); ++c)
                out << ' ' << fmt((*s.rho0)(r, c).real()) << ' ' << fmt((*s.rho0)(r, c).imag());
        out << '\n';
    }
    out << "\n[mc]\ntrajectories = " << s.mc_trajectories << "\nseed = " << s.mc_seed << '\n';
    out << "\n[series]\norder = " << s.series_order << "\nnodes = " << s.series_nodes << '\n';
    out << "\n[perturbation]\norder = " << s.perturbation_order << '\n';
    if (!s.compare_methods.empty()) {
        out << "\n[compare]\nmethods =";
        for (const auto& m : s.compare_methods) out << ' ' << m;
        out << '\n'
            << "tolerance = " << fmt(s.compare_tolerance) << '\n'
            << "se_mult = " << fmt(s.compare_se_mult) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// realizations

StructureTensor scenario_tensor(const Scenario& scenario) {
    if (scenario.convention == Convention::custom_f)
        return StructureTensor::from_entries(scenario.bloch_dim(), scenario.f_indices,
                                             scenario.f_values);
    return StructureTensor::from_basis(build_generators(scenario.dimension));
}

namespace {

Eigen::VectorXd operator_bloch(const OperatorSpec& spec, const GeneratorBasis& basis) {
    if (!spec.is_matrix) return spec.bloch;
    return decompose_hermitian(spec.matrix, basis).vector;
}

Eigen::MatrixXcd operator_matrix(const OperatorSpec& spec, const GeneratorBasis& basis) {
    if (spec.is_matrix) return spec.matrix;
    CoeffVector c;
    c.scalar = 0.0;
    c.vector = spec.bloch;
    return reconstruct(c, basis);
}

}  // namespace

EvolutionProblem build_evolution_problem(const Scenario& scenario) {
    StructureTensor tensor = scenario_tensor(scenario);
    const int d = scenario.bloch_dim();

    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd r0;

    if (scenario.convention == Convention::custom_f) {
        if (scenario.hamiltonian) h = scenario.hamiltonian->bloch;
        r0 = *scenario.r0;
        std::vector<Channel> channels;
        for (const auto& lb : scenario.lindblads) channels.push_back({lb.op.bloch, lb.gamma});
        return EvolutionProblem(std::move(tensor), std::move(h), std::move(channels),
                                std::move(r0), scenario.picture);
    }

    const GeneratorBasis basis = build_generators(scenario.dimension);
    if (scenario.hamiltonian) h = operator_bloch(*scenario.hamiltonian, basis);
    if (scenario.r0)
        r0 = *scenario.r0;
    else
        r0 = bloch_encode(*scenario.rho0, basis);
    std::vector<Channel> channels;
    for (const auto& lb : scenario.lindblads)
        channels.push_back({operator_bloch(lb.op, basis), lb.gamma});
    return EvolutionProblem(std::move(tensor), std::move(h), std::move(channels),
                            std::move(r0), scenario.picture);
}

MatrixProblem build_matrix_problem(const Scenario& scenario) {
    if (scenario.convention != Convention::trace2)
        throw std::invalid_argument(
            "matrix realization requires the trace2 convention");
    const GeneratorBasis basis = build_generators(scenario.dimension);
    const int n = scenario.dimension;

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n, n);
    if (scenario.hamiltonian) h = operator_matrix(*scenario.hamiltonian, basis);

    std::vector<Eigen::MatrixXcd> ls;
    std::vector<GammaProfile> gs;
    for (const auto& lb : scenario.lindblads) {
        ls.push_back(operator_matrix(lb.op, basis));
        gs.push_back(lb.gamma);
    }

    Eigen::MatrixXcd rho0;
    if (scenario.rho0)
        rho0 = *scenario.rho0;
    else
        rho0 = bloch_decode(*scenario.r0, basis);
    return MatrixProblem(std::move(h), std::move(ls), std::move(gs), std::move(rho0));
}

std::vector<double> scenario_grid(const Scenario& scenario) {
    const double step = scenario.dt * scenario.output_stride;
    const int points = static_cast<int>(std::floor(scenario.t_final / step + 1e-9));
    std::vector<double> grid(points + 1);
    for (int i = 0; i <= points; ++i) grid[i] = i * step;
    return grid;
}

// ---------------------------------------------------------------------------
// compare

CompareReport compare_report(const std::vector<Trajectory>& trajectories,
                             const std::vector<std::string>& labels,
                             const CompareThresholds& thresholds) {
    if (trajectories.size() < 2)
        throw std::invalid_argument("compare_report: need at least two trajectories");
    if (labels.size() != trajectories.size())
        throw std::invalid_argument("compare_report: one label per trajectory");
    const auto& ref_times = trajectories.front().times;
    for (const auto& trajectory : trajectories) {
        if (trajectory.times.size() != ref_times.size())
            throw std::invalid_argument("compare_report: grid mismatch");
        for (std::size_t i = 0; i < ref_times.size(); ++i)
            if (std::abs(trajectory.times[i] - ref_times[i]) > 1e-12)
                throw std::invalid_argument("compare_report: grid mismatch");
    }

    CompareReport report;
    report.times = ref_times;
    report.pass = true;

    std::ostringstream text;
    for (std::size_t a = 0; a < trajectories.size(); ++a) {
        for (std::size_t b = a + 1; b < trajectories.size(); ++b) {
            const auto& ta = trajectories[a];
            const auto& tb = trajectories[b];
            PairReport pair;
            pair.first = labels[a];
            pair.second = labels[b];
            pair.stochastic = !ta.stderrs.empty() || !tb.stderrs.empty();

            std::vector<double> devs(ref_times.size(), 0.0);
            for (std::size_t i = 0; i < ref_times.size(); ++i) {
                const Eigen::VectorXd diff = ta.bloch[i] - tb.bloch[i];
                devs[i] = diff.size() > 0 ? diff.cwiseAbs().maxCoeff() : 0.0;
                pair.global_sup = std::max(pair.global_sup, devs[i]);
                if (pair.stochastic) {
                    for (Eigen::Index c = 0; c < diff.size(); ++c) {
                        double var = 0.0;
                        if (!ta.stderrs.empty()) var += ta.stderrs[i](c) * ta.stderrs[i](c);
                        if (!tb.stderrs.empty()) var += tb.stderrs[i](c) * tb.stderrs[i](c);
                        const double dev = std::abs(diff(c));
                        // deviations below the deterministic floor carry no
                        // statistical content (zero-variance components)
                        if (dev <= thresholds.abs_tol) continue;
                        pair.max_se_mult =
                            std::max(pair.max_se_mult, dev / std::max(std::sqrt(var), 1e-300));
                    }
                }
            }
            pair.pass = pair.stochastic ? pair.max_se_mult <= thresholds.se_mult
                                        : pair.global_sup <= thresholds.abs_tol;
            report.pass = report.pass && pair.pass;

            text << pair.first << " vs " << pair.second << ": sup|dev| = " << fmt(pair.global_sup);
            if (pair.stochastic)
                text << ", max dev/SE = " << fmt(pair.max_se_mult) << " [limit "
                     << fmt(thresholds.se_mult) << "]";
            else
                text << " [limit " << fmt(thresholds.abs_tol) << "]";
            text << (pair.pass ? "  PASS" : "  FAIL") << '\n';

            report.per_time.push_back(std::move(devs));
            report.pairs.push_back(std::move(pair));
        }
    }
    text << "overall: " << (report.pass ? "PASS" : "FAIL") << '\n';
    report.text = text.str();
    return report;
}

// ---------------------------------------------------------------------------
// run dispatch

namespace {

double purity(const Eigen::VectorXd& r) { return r.squaredNorm(); }

void write_csv(const std::string& path, const Trajectory& trajectory) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    const Eigen::Index d = trajectory.bloch.empty() ? 0 : trajectory.bloch.front().size();
    out << 't';
    for (Eigen::Index c = 0; c < d; ++c) out << ",r" << (c + 1);
    out << ",purity";
    if (!trajectory.stderrs.empty())
        for (Eigen::Index c = 0; c < d; ++c) out << ",se" << (c + 1);
    out << '\n';
    for (std::size_t i = 0; i < trajectory.times.size(); ++i) {
        out << fmt(trajectory.times[i]);
        for (Eigen::Index c = 0; c < d; ++c) out << ',' << fmt(trajectory.bloch[i](c));
        out << ',' << fmt(purity(trajectory.bloch[i]));
        if (!trajectory.stderrs.empty())
            for (Eigen::Index c = 0; c < d; ++c) out << ',' << fmt(trajectory.stderrs[i](c));
        out << '\n';
    }
}

struct MetaWriter {
    std::ostringstream out;

    void common(const Scenario& scenario) {
        out << "name = " << scenario.name << '\n'
            << "dimension = " << scenario.dimension << '\n'
            << "convention = "
            << (scenario.convention == Convention::trace2 ? "trace2" : "custom-f") << '\n'
            << "picture = "
            << (scenario.picture == Picture::heisenberg ? "heisenberg" : "schroedinger")
            << '\n'
            << "t_final = " << fmt(scenario.t_final) << '\n'
            << "dt = " << fmt(scenario.dt) << '\n'
            << "output_stride = " << scenario.output_stride << '\n';
    }

    void method_block(const std::string& method, const Trajectory& trajectory) {
        out << "\n[" << method << "]\n";
        if (trajectory.meta.dt > 0.0) out << "dt = " << fmt(trajectory.meta.dt) << '\n';
        if (trajectory.meta.order >= 0) out << "order = " << trajectory.meta.order << '\n';
        if (std::isfinite(trajectory.meta.tail_bound))
            out << "tail_bound = " << fmt(trajectory.meta.tail_bound) << '\n';
        if (std::isfinite(trajectory.meta.step_halving_diff)) {
            out << "step_halving_diff = " << fmt(trajectory.meta.step_halving_diff) << '\n';
            out << "accuracy_warning = " << (trajectory.meta.accuracy_warning ? 1 : 0) << '\n';
        }
        if (trajectory.meta.trajectories > 0) {
            out << "trajectories = " << trajectory.meta.trajectories << '\n';
            out << "seed = " << trajectory.meta.seed << '\n';
        }
        // norm extremes over the emitted trajectory
        double max_norm = 0.0, max_increase = 0.0;
        for (std::size_t i = 0; i < trajectory.bloch.size(); ++i) {
            max_norm = std::max(max_norm, trajectory.bloch[i].norm());
            if (i > 0)
                max_increase = std::max(
                    max_increase, trajectory.bloch[i].norm() - trajectory.bloch[i - 1].norm());
        }
        out << "max_bloch_norm = " << fmt(max_norm) << '\n';
        out << "max_norm_increase = " << fmt(max_increase) << '\n';
    }

    void oracle_stats(const IntegrationStats& stats) {
        out << "max_trace_error = " << fmt(stats.max_trace_error) << '\n'
            << "max_hermiticity_error = " << fmt(stats.max_hermiticity_error) << '\n'
            << "min_eigenvalue = " << fmt(stats.min_eigenvalue) << '\n';
    }
};

}  // namespace

int run_scenario(const Scenario& scenario_in, const std::string& out_dir,
                 const RunOverrides& overrides) {
    Scenario scenario = scenario_in;
    if (overrides.seed) scenario.mc_seed = *overrides.seed;
    if (overrides.dt) scenario.dt = *overrides.dt;
    if (overrides.trajectories) scenario.mc_trajectories = *overrides.trajectories;
    if (overrides.order) {
        scenario.series_order = *overrides.order;
        scenario.perturbation_order = *overrides.order;
    }
    const std::string method = overrides.method.value_or(scenario.method);

    std::filesystem::create_directories(out_dir);
    const std::string stem = out_dir + "/" + scenario.name;
    const auto grid = scenario_grid(scenario);

    MetaWriter meta;
    meta.common(scenario);
    meta.out << "method = " << method << '\n';

    auto run_method = [&](const std::string& m) -> Trajectory {
        if (m == "formula") {
            const auto problem = build_evolution_problem(scenario);
            EvolveOptions options;
            options.dt = scenario.dt;
            return evolve_formula(problem, grid, options);
        }
        if (m == "series") {
            const auto problem = build_evolution_problem(scenario);
            DysonOptions options;
            options.nodes = scenario.series_nodes;
            Trajectory trajectory;
            trajectory.times = grid;
            trajectory.bloch.assign(grid.size(), problem.r0);
            std::vector<double> tails(grid.size(), 0.0);
            const int n = static_cast<int>(grid.size());
#pragma omp parallel for schedule(dynamic)
            for (int i = 1; i < n; ++i)
                trajectory.bloch[i] = dyson_series(problem, grid[i], scenario.series_order,
                                                   options, &tails[i]);
            trajectory.meta.method = "series";
            trajectory.meta.order = scenario.series_order;
            trajectory.meta.tail_bound = *std::max_element(tails.begin(), tails.end());
            return trajectory;
        }
        if (m == "perturbation") {
            auto problem = build_evolution_problem(scenario);
            if (problem.channels.size() != 1)
                throw std::invalid_argument("perturbation method needs exactly one channel");
            auto& channel = problem.channels.front();
            if (!channel.gamma.is_constant())
                throw std::invalid_argument(
                    "perturbation method needs a constant gamma profile");
            const double g0 = channel.gamma.constant_value();
            const double lnorm = channel.l.norm();
            if (lnorm == 0.0)
                throw std::invalid_argument("perturbation method: channel vector is zero");
            const double gamma = g0 * g0 * lnorm * lnorm;
            channel.l /= lnorm;
            channel.gamma = GammaProfile::constant(1.0);

            DysonOptions options;
            options.nodes = scenario.series_nodes;
            Trajectory trajectory;
            trajectory.times = grid;
            trajectory.bloch.assign(grid.size(), problem.r0);
            const int n = static_cast<int>(grid.size());
#pragma omp parallel for schedule(dynamic)
            for (int i = 1; i < n; ++i)
                trajectory.bloch[i] = perturbation_series(
                    problem, grid[i], scenario.perturbation_order, gamma, options);
            trajectory.meta.method = "perturbation";
            trajectory.meta.order = scenario.perturbation_order;
            return trajectory;
        }
        if (m == "mc") {
            NoiseConfig config;
            config.master_seed = scenario.mc_seed;
            config.trajectories = scenario.mc_trajectories;
            config.dt = scenario.dt;
            if (scenario.convention == Convention::trace2) {
                const auto problem = build_matrix_problem(scenario);
                config.channels = static_cast<int>(problem.lindblads.size());
                const auto basis = build_generators(scenario.dimension);
                auto result =
                    ensemble_bloch(problem, basis, config, grid, scenario.picture);
                result.trajectory.meta.method = "mc";
                return result.trajectory;
            }
            const auto problem = build_evolution_problem(scenario);
            config.channels = static_cast<int>(problem.channels.size());
            auto result = bloch_space_unraveling(problem, config, grid);
            result.trajectory.meta.method = "mc";
            return result.trajectory;
        }
        if (m == "oracle") {
            const auto problem = build_matrix_problem(scenario);
            IntegrateOptions options;
            options.dt = scenario.dt;
            auto matrix_trajectory = integrate(problem, grid, options);
            if (scenario.picture == Picture::heisenberg)
                matrix_trajectory = to_heisenberg(matrix_trajectory, problem.hamiltonian);
            const auto basis = build_generators(scenario.dimension);
            Trajectory trajectory;
            trajectory.times = grid;
            for (const auto& rho : matrix_trajectory.rho)
                trajectory.bloch.push_back(bloch_encode(rho, basis));
            trajectory.meta.method = "oracle";
            trajectory.meta.dt = matrix_trajectory.dt;
            meta.oracle_stats(matrix_trajectory.stats);
            return trajectory;
        }
        throw std::invalid_argument("unknown method `" + m + "`");
    };

    try {
        if (method == "compare") {
            std::vector<std::string> methods = scenario.compare_methods;
            if (methods.empty()) {
                methods = {"formula",
                           scenario.convention == Convention::trace2 ? "oracle" : "series"};
            }
            std::vector<Trajectory> trajectories;
            for (const auto& m : methods) {
                trajectories.push_back(run_method(m));
                write_csv(stem + "." + m + ".csv", trajectories.back());
                meta.method_block(m, trajectories.back());
            }
            CompareThresholds thresholds;
            thresholds.abs_tol = scenario.compare_tolerance;
            thresholds.se_mult = scenario.compare_se_mult;
            const auto report = compare_report(trajectories, methods, thresholds);

            std::ofstream csv(stem + ".compare.csv");
            csv << 't';
            for (const auto& pair : report.pairs)
                csv << ",maxdev_" << pair.first << "_vs_" << pair.second;
            csv << '\n';
            for (std::size_t i = 0; i < report.times.size(); ++i) {
                csv << fmt(report.times[i]);
                for (const auto& devs : report.per_time) csv << ',' << fmt(devs[i]);
                csv << '\n';
            }
            std::ofstream txt(stem + ".compare.txt");
            txt << report.text;
            std::fputs(report.text.c_str(), stdout);

            std::ofstream metafile(stem + ".meta");
            metafile << meta.out.str();
            return report.pass ? 0 : 2;
        }

        const Trajectory trajectory = run_method(method);
        write_csv(stem + "." + method + ".csv", trajectory);
        meta.method_block(method, trajectory);
        std::ofstream metafile(stem + ".meta");
        metafile << meta.out.str();
        std::printf("%s: wrote %s.%s.csv (%zu points)\n", scenario.name.c_str(), stem.c_str(),
                    method.c_str(), trajectory.times.size());
        return 0;
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    }
}

}  // namespace blochsim
