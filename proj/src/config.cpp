#include "bsvie/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace bsvie {

// ---------------------------------------------------------------------------
// Structured-text parsing
// ---------------------------------------------------------------------------

namespace {

struct ConfigLexer {
    const std::string& src;
    std::size_t pos = 0;
    int line = 1;
    std::vector<std::string> problems;

    void skip_space() {
        while (pos < src.size()) {
            const char c = src[pos];
            if (c == '#') {
                while (pos < src.size() && src[pos] != '\n') {
                    ++pos;
                }
            } else if (c == '\n') {
                ++line;
                ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    bool eof() {
        skip_space();
        return pos >= src.size();
    }

    char peek() {
        skip_space();
        return pos < src.size() ? src[pos] : '\0';
    }

    [[noreturn]] void fail(const std::string& what) {
        std::ostringstream os;
        os << "line " << line << ": " << what;
        throw ConfigError({os.str()});
    }

    std::string ident() {
        skip_space();
        std::size_t start = pos;
        while (pos < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
            ++pos;
        }
        if (start == pos) {
            fail("expected a key");
        }
        return src.substr(start, pos - start);
    }

    ConfigEntry scalar() {
        skip_space();
        ConfigEntry v;
        v.line = line;
        const char c = peek();
        if (c == '"') {
            ++pos;
            std::string out;
            while (pos < src.size() && src[pos] != '"') {
                if (src[pos] == '\n') {
                    fail("unterminated string");
                }
                if (src[pos] == '\\' && pos + 1 < src.size()) {
                    ++pos;
                }
                out += src[pos++];
            }
            if (pos >= src.size()) {
                fail("unterminated string");
            }
            ++pos;
            v.kind = ConfigEntry::Kind::String;
            v.text = out;
            return v;
        }
        if (c == '[') {
            ++pos;
            v.kind = ConfigEntry::Kind::List;
            skip_space();
            if (peek() == ']') {
                ++pos;
                return v;
            }
            for (;;) {
                v.list.push_back(scalar());
                skip_space();
                if (peek() == ',') {
                    ++pos;
                    continue;
                }
                if (peek() == ']') {
                    ++pos;
                    return v;
                }
                fail("expected ',' or ']' in list");
            }
        }
        // Bare token: number or boolean.
        std::size_t start = pos;
        while (pos < src.size() && !std::isspace(static_cast<unsigned char>(src[pos])) &&
               src[pos] != ',' && src[pos] != ']' && src[pos] != '}' && src[pos] != '#') {
            ++pos;
        }
        std::string tok = src.substr(start, pos - start);
        if (tok.empty()) {
            fail("expected a value");
        }
        if (tok == "true" || tok == "false") {
            v.kind = ConfigEntry::Kind::Bool;
            v.flag = tok == "true";
            return v;
        }
        double num = 0.0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), num);
        if (ec != std::errc{} || p != tok.data() + tok.size()) {
            fail("expected number, boolean, string or list, got '" + tok + "'");
        }
        v.kind = ConfigEntry::Kind::Number;
        v.number = num;
        return v;
    }

    ConfigEntry section(bool top_level) {
        ConfigEntry s;
        s.kind = ConfigEntry::Kind::Section;
        s.line = line;
        for (;;) {
            skip_space();
            if (pos >= src.size()) {
                if (!top_level) {
                    fail("missing '}'");
                }
                return s;
            }
            if (peek() == '}') {
                if (top_level) {
                    fail("unmatched '}'");
                }
                ++pos;
                return s;
            }
            std::string key = ident();
            for (const auto& [k, unused] : s.children) {
                if (k == key) {
                    fail("duplicate key '" + key + "'");
                }
            }
            skip_space();
            const char c = peek();
            if (c == '{') {
                ++pos;
                s.children.emplace_back(key, section(false));
            } else if (c == '=') {
                ++pos;
                s.children.emplace_back(key, scalar());
            } else {
                fail("expected '=' or '{' after '" + key + "'");
            }
        }
    }
};

} // namespace

ConfigEntry parse_config_text(const std::string& text) {
    ConfigLexer lexer{text};
    return lexer.section(true);
}

std::string config_hash_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xF];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Schema application
// ---------------------------------------------------------------------------

namespace {

/// Tracks key consumption in one section and collects all violations.
class SectionReader {
public:
    SectionReader(const ConfigEntry* section, std::string path, std::vector<std::string>& problems)
        : section_(section), path_(std::move(path)), problems_(&problems) {
        if (section_ != nullptr) {
            seen_.resize(section_->children.size(), false);
        }
    }

    bool present() const { return section_ != nullptr; }

    void complain(const std::string& what) const { problems_->push_back(path_ + ": " + what); }

    const ConfigEntry* get(const std::string& key, ConfigEntry::Kind kind, bool required) {
        if (section_ == nullptr) {
            return nullptr;
        }
        for (std::size_t k = 0; k < section_->children.size(); ++k) {
            if (section_->children[k].first != key) {
                continue;
            }
            seen_[k] = true;
            const ConfigEntry& v = section_->children[k].second;
            if (v.kind != kind) {
                complain("key '" + key + "' has the wrong type");
                return nullptr;
            }
            return &v;
        }
        if (required) {
            complain("missing required key '" + key + "'");
        }
        return nullptr;
    }

    double number(const std::string& key, double fallback, bool required = false) {
        const ConfigEntry* v = get(key, ConfigEntry::Kind::Number, required);
        return v != nullptr ? v->number : fallback;
    }

    std::string text(const std::string& key, const std::string& fallback, bool required = false) {
        const ConfigEntry* v = get(key, ConfigEntry::Kind::String, required);
        return v != nullptr ? v->text : fallback;
    }

    SectionReader child(const std::string& key, bool required) {
        const ConfigEntry* v = get(key, ConfigEntry::Kind::Section, required);
        return SectionReader(v, path_ + "." + key, *problems_);
    }

    /// Call last: any unconsumed key is a violation.
    void finish() {
        if (section_ == nullptr) {
            return;
        }
        for (std::size_t k = 0; k < section_->children.size(); ++k) {
            if (!seen_[k]) {
                complain("unknown key '" + section_->children[k].first + "'");
            }
        }
    }

private:
    const ConfigEntry* section_;
    std::string path_;
    std::vector<std::string>* problems_;
    std::vector<bool> seen_;
};

dsl::Expression parse_expr(SectionReader& reader, const std::string& key, const char* fallback,
                           bool required, std::vector<std::string>& problems,
                           const std::string& where) {
    std::string text = reader.text(key, fallback != nullptr ? fallback : "", required);
    if (text.empty()) {
        return {};
    }
    try {
        return dsl::Expression::parse(text);
    } catch (const Error& e) {
        problems.push_back(where + "." + key + ": " + e.what());
        return {};
    }
}

TerminalProcess read_psi(SectionReader reader, std::vector<std::string>& problems,
                         const std::string& where) {
    TerminalProcess psi;
    if (!reader.present()) {
        return psi;
    }
    const std::string cls = reader.text("class", "markov_terminal");
    if (cls == "deterministic") {
        psi.cls = TerminalClass::Deterministic;
    } else if (cls == "markov_terminal") {
        psi.cls = TerminalClass::MarkovTerminal;
    } else if (cls == "path_functional") {
        psi.cls = TerminalClass::PathFunctional;
    } else {
        problems.push_back(where + ".class: expected deterministic, markov_terminal or "
                           "path_functional");
    }
    psi.expr = parse_expr(reader, "expr", nullptr, true, problems, where);
    reader.finish();
    if (!psi.expr.empty()) {
        try {
            psi.validate();
        } catch (const Error& e) {
            problems.push_back(where + ": " + e.what());
        }
    }
    return psi;
}

Driver read_driver(SectionReader reader, std::vector<std::string>& problems,
                   const std::string& where) {
    Driver driver;
    if (!reader.present()) {
        return driver;
    }
    driver.g = parse_expr(reader, "g_expr", nullptr, true, problems, where);
    driver.lipschitz_c = reader.number("lipschitz_C", 1.0);
    if (const ConfigEntry* weights = reader.get("jump_weights", ConfigEntry::Kind::List, false)) {
        for (std::size_t k = 0; k < weights->list.size(); ++k) {
            const ConfigEntry& w = weights->list[k];
            if (w.kind != ConfigEntry::Kind::String) {
                problems.push_back(where + ".jump_weights: entries must be strings");
                continue;
            }
            try {
                driver.jump_weights.push_back(dsl::Expression::parse(w.text));
            } catch (const Error& e) {
                problems.push_back(where + ".jump_weights[" + std::to_string(k) + "]: " + e.what());
            }
        }
    }
    reader.finish();
    if (!driver.g.empty()) {
        try {
            driver.validate();
        } catch (const Error& e) {
            problems.push_back(where + ": " + e.what());
        }
    }
    return driver;
}

GirsanovCoefficients read_coeffs(SectionReader& reader, std::vector<std::string>& problems,
                                 const std::string& where) {
    GirsanovCoefficients coeffs = GirsanovCoefficients::trivial();
    dsl::Expression beta = parse_expr(reader, "beta_expr", "0", false, problems, where);
    dsl::Expression theta = parse_expr(reader, "theta_expr", "0", false, problems, where);
    if (!beta.empty()) {
        coeffs.beta = beta;
    }
    if (!theta.empty()) {
        coeffs.theta = theta;
    }
    coeffs.epsilon = reader.number("epsilon", 1e-3);
    const std::string pi = reader.text("pi_expr", "");
    if (!pi.empty()) {
        try {
            coeffs.pi = dsl::Expression::parse(pi);
        } catch (const Error& e) {
            problems.push_back(where + ".pi_expr: " + e.what());
        }
    }
    return coeffs;
}

} // namespace

const char* subcommand_name(Subcommand cmd) {
    switch (cmd) {
    case Subcommand::Solve: return "solve";
    case Subcommand::SolveLinear: return "solve-linear";
    case Subcommand::Kernel: return "kernel";
    case Subcommand::Risk: return "risk";
    case Subcommand::Axioms: return "axioms";
    case Subcommand::Compare: return "compare";
    case Subcommand::Semimartingale: return "semimartingale";
    case Subcommand::Oracle: return "oracle";
    }
    return "?";
}

ScenarioConfig load_scenario(const std::string& text, Subcommand cmd) {
    ConfigEntry root = parse_config_text(text);
    std::vector<std::string> problems;
    SectionReader top(&root, "config", problems);

    ScenarioConfig out;
    out.config_hash = config_hash_hex(text);
    out.schema_version = static_cast<int>(top.number("schema_version", 1, true));
    if (out.schema_version != 1) {
        problems.push_back("config.schema_version: only version 1 is understood");
    }

    {
        SectionReader grid = top.child("grid", true);
        const double T = grid.number("T", 1.0, true);
        const int N = static_cast<int>(grid.number("N", 1, true));
        grid.finish();
        try {
            out.grid = TimeGrid(T, N);
        } catch (const Error& e) {
            problems.push_back(std::string("config.grid: ") + e.what());
        }
    }

    {
        SectionReader jumps = top.child("jumps", false);
        if (jumps.present()) {
            out.jumps.lambda = jumps.number("lambda", 0.0, true);
            const std::string dist = jumps.text("mark_dist", "point");
            SectionReader params = jumps.child("params", false);
            if (dist == "point") {
                out.jumps.dist = MarkDist::Point;
                out.jumps.a = params.number("value", 1.0);
            } else if (dist == "normal") {
                out.jumps.dist = MarkDist::Normal;
                out.jumps.a = params.number("mean", 0.0);
                out.jumps.b = params.number("sd", 1.0);
            } else if (dist == "lognormal") {
                out.jumps.dist = MarkDist::Lognormal;
                out.jumps.a = params.number("mu", 0.0);
                out.jumps.b = params.number("sigma", 1.0);
            } else {
                jumps.complain("mark_dist must be point, normal or lognormal");
            }
            params.finish();
            jumps.finish();
            try {
                out.jumps.validate();
            } catch (const Error& e) {
                problems.push_back(std::string("config.jumps: ") + e.what());
            }
        }
    }

    {
        SectionReader diff = top.child("diffusion", true);
        out.diffusion.x0 = diff.number("x0", 1.0, true);
        out.diffusion.drift = parse_expr(diff, "b_expr", nullptr, true, problems, "config.diffusion");
        out.diffusion.volatility =
            parse_expr(diff, "sigma_expr", nullptr, true, problems, "config.diffusion");
        diff.finish();
    }

    {
        SectionReader mc = top.child("mc", true);
        out.n_paths = static_cast<int>(mc.number("n_paths", 1000, true));
        out.seed = static_cast<std::uint64_t>(mc.number("seed", 1, true));
        mc.finish();
        if (out.n_paths < 1) {
            problems.push_back("config.mc.n_paths: must be at least 1");
        }
    }

    {
        SectionReader solver = top.child("solver", false);
        if (solver.present()) {
            out.basis.degree = static_cast<int>(solver.number("basis_degree", 3));
            out.solver_options.picard_tol = solver.number("picard_tol", 1e-8);
            out.solver_options.max_picard = static_cast<int>(solver.number("max_iter", 30));
            const std::string den = solver.text("denominator", "regressed");
            if (den == "regressed") {
                out.denominator = DenominatorMode::Regressed;
            } else if (den == "simulated") {
                out.denominator = DenominatorMode::Simulated;
            } else {
                solver.complain("denominator must be regressed or simulated");
            }
            out.sign = static_cast<int>(solver.number("sign", 1));
            if (out.sign != 1 && out.sign != -1) {
                solver.complain("sign must be +1 or -1");
            }
            if (const ConfigEntry* probe = solver.get("probe_lipschitz", ConfigEntry::Kind::Bool, false)) {
                out.probe_driver = probe->flag;
            }
            if (out.basis.degree < 1 || out.basis.degree > 8) {
                solver.complain("basis_degree must be between 1 and 8");
            }
            solver.finish();
        }
    }

    const bool wants_driver = cmd == Subcommand::Solve || cmd == Subcommand::Risk ||
                              cmd == Subcommand::Axioms || cmd == Subcommand::Oracle;
    if (wants_driver) {
        SectionReader driver = top.child("driver", true);
        if (driver.present()) {
            out.driver = read_driver(std::move(driver), problems, "config.driver");
        }
    }

    if (cmd == Subcommand::SolveLinear || cmd == Subcommand::Kernel) {
        SectionReader linear = top.child("linear", true);
        if (linear.present()) {
            LinearSpec spec;
            const std::string alpha = linear.text("alpha_expr", "");
            if (!alpha.empty()) {
                VolterraKernel kernel;
                try {
                    kernel.alpha = dsl::Expression::parse(alpha);
                } catch (const Error& e) {
                    problems.push_back(std::string("config.linear.alpha_expr: ") + e.what());
                }
                kernel.bound = linear.number("alpha_bound", 1.0);
                spec.kernel = kernel;
            } else if (cmd == Subcommand::Kernel) {
                linear.complain("kernel runs need alpha_expr");
            } else {
                linear.number("alpha_bound", 0.0); // consume if present
            }
            spec.coeffs = read_coeffs(linear, problems, "config.linear");
            spec.sign = static_cast<int>(linear.number("sign", 1));
            if (spec.sign != 1 && spec.sign != -1) {
                linear.complain("sign must be +1 or -1");
            }
            spec.resolvent_tol = linear.number("resolvent_tol", 1e-8);
            linear.finish();
            out.linear = std::move(spec);
        }
    }

    const bool wants_psi = cmd == Subcommand::Solve || cmd == Subcommand::SolveLinear ||
                           cmd == Subcommand::Risk || cmd == Subcommand::Axioms ||
                           cmd == Subcommand::Oracle;
    if (wants_psi) {
        SectionReader psi = top.child("psi", true);
        if (psi.present()) {
            out.psi = read_psi(std::move(psi), problems, "config.psi");
        }
    }

    if (cmd == Subcommand::Axioms) {
        SectionReader ax = top.child("axioms", true);
        if (ax.present()) {
            AxiomsSpec spec;
            spec.psi1 = read_psi(ax.child("psi1", true), problems, "config.axioms.psi1");
            spec.psi2 = read_psi(ax.child("psi2", true), problems, "config.axioms.psi2");
            spec.shift = ax.number("shift", 1.0);
            if (const ConfigEntry* ls = ax.get("lambdas", ConfigEntry::Kind::List, false)) {
                spec.lambdas.clear();
                for (const ConfigEntry& v : ls->list) {
                    if (v.kind != ConfigEntry::Kind::Number || v.number < 0.0 || v.number > 1.0) {
                        ax.complain("lambdas must be numbers in [0, 1]");
                        continue;
                    }
                    spec.lambdas.push_back(v.number);
                }
            }
            spec.mono_bump = parse_expr(ax, "mono_bump_expr", "1", false, problems, "config.axioms");
            spec.past_node = static_cast<int>(ax.number("past_node", -1));
            ax.finish();
            out.axioms = std::move(spec);
        }
    }

    if (cmd == Subcommand::Compare) {
        SectionReader cp = top.child("compare", true);
        if (cp.present()) {
            CompareSpec spec;
            const std::string orient = cp.text("orientation", "y_independent");
            if (orient == "general") {
                spec.orientation = Orientation::General;
            } else if (orient == "y_independent") {
                spec.orientation = Orientation::YIndependent;
            } else {
                cp.complain("orientation must be general or y_independent");
            }
            spec.driver1 = read_driver(cp.child("driver1", true), problems, "config.compare.driver1");
            spec.driver2 = read_driver(cp.child("driver2", true), problems, "config.compare.driver2");
            spec.psi1 = read_psi(cp.child("psi1", true), problems, "config.compare.psi1");
            spec.psi2 = read_psi(cp.child("psi2", true), problems, "config.compare.psi2");
            SectionReader cert = cp.child("certificate", true);
            if (cert.present()) {
                spec.certificate = read_coeffs(cert, problems, "config.compare.certificate");
                cert.finish();
            }
            cp.finish();
            out.compare = std::move(spec);
        }
    }

    if (cmd == Subcommand::Semimartingale) {
        SectionReader sm = top.child("semimartingale", true);
        if (sm.present()) {
            SemimartingaleSpec spec;
            spec.type = static_cast<int>(sm.number("type", 1, true));
            if (spec.type < 1 || spec.type > 3) {
                sm.complain("type must be 1, 2 or 3");
            }
            if (spec.type == 1) {
                spec.f1 = parse_expr(sm, "F1_expr", nullptr, true, problems, "config.semimartingale");
                spec.f2 = parse_expr(sm, "F2_expr", nullptr, true, problems, "config.semimartingale");
            } else {
                spec.f = parse_expr(sm, "F_expr", nullptr, true, problems, "config.semimartingale");
            }
            if (spec.type == 3) {
                spec.g3 = parse_expr(sm, "g_expr", nullptr, true, problems, "config.semimartingale");
            }
            spec.x_points = static_cast<int>(sm.number("x_points", 21));
            if (spec.x_points < 4) {
                sm.complain("x_points must be at least 4");
            }
            sm.finish();
            out.semimartingale = std::move(spec);
        }
    }

    if (cmd == Subcommand::Oracle) {
        SectionReader orc = top.child("oracle", true);
        if (orc.present()) {
            OracleSpec spec;
            spec.branching = static_cast<int>(orc.number("branching", 32, true));
            spec.replications = static_cast<int>(orc.number("replications", 64));
            orc.finish();
            out.oracle = std::move(spec);
        }
        if (out.grid.steps > 4) {
            problems.push_back("config.grid.N: oracle runs are restricted to N <= 4");
        }
    }

    {
        SectionReader outputs = top.child("outputs", false);
        if (outputs.present()) {
            out.out_dir = outputs.text("dir", "");
            outputs.finish();
        }
    }

    top.finish();
    if (!problems.empty()) {
        throw ConfigError(problems);
    }
    return out;
}

ScenarioConfig load_scenario_file(const std::string& path, Subcommand cmd) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read config file '" + path + "'");
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_scenario(buffer.str(), cmd);
}

} // namespace bsvie
