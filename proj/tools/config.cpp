#include "config.hpp"

#include "solstab/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <algorithm>
#include <sstream>

namespace solstab::cli {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); }

std::string fmt(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
    double x = 0.0;
    const char* end = v.data() + v.size();
    auto res = std::from_chars(v.data(), end, x);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(x)) invalid(key + ": not a finite number: '" + v + "'");
    return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t x = 0;
    const char* end = v.data() + v.size();
    auto res = std::from_chars(v.data(), end, x);
    if (res.ec != std::errc() || res.ptr != end) invalid(key + ": not an unsigned integer: '" + v + "'");
    return x;
}

int to_int(const std::string& key, const std::string& v) {
    int x = 0;
    const char* end = v.data() + v.size();
    auto res = std::from_chars(v.data(), end, x);
    if (res.ec != std::errc() || res.ptr != end) invalid(key + ": not an integer: '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    invalid(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
        if (a == std::string::npos) invalid(key + ": empty list entry");
        out.push_back(to_double(key, item.substr(a, b - a + 1)));
    }
    if (out.empty()) invalid(key + ": empty list");
    return out;
}

struct Field {
    std::string section, key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

std::vector<Field> fields(RunConfig& c) {
    auto num = [](const std::string& s, const std::string& k, double& ref) {
        return Field{s, k, [&ref, k](const std::string& v) { ref = to_double(k, v); }, [&ref] { return fmt(ref); }};
    };
    auto str = [](const std::string& s, const std::string& k, std::string& ref) {
        return Field{s, k, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
    };
    auto boolean = [](const std::string& s, const std::string& k, bool& ref) {
        return Field{s, k, [&ref, k](const std::string& v) { ref = to_bool(k, v); }, [&ref] { return std::string(ref ? "true" : "false"); }};
    };
    auto integer = [](const std::string& s, const std::string& k, int& ref) {
        return Field{s, k, [&ref, k](const std::string& v) { ref = to_int(k, v); }, [&ref] { return std::to_string(ref); }};
    };
    auto size = [](const std::string& s, const std::string& k, std::size_t& ref) {
        return Field{s, k, [&ref, k](const std::string& v) { ref = static_cast<std::size_t>(to_u64(k, v)); },
                     [&ref] { return std::to_string(ref); }};
    };
    return {
        str("soliton", "kind", c.soliton.kind),
        integer("soliton", "epsilon", c.soliton.epsilon),
        integer("soliton", "n", c.soliton.n),
        num("soliton", "s", c.soliton.s),
        num("soliton", "r_max", c.soliton.r_max),
        num("soliton", "ode_tol", c.soliton.ode_tol),
        size("soliton", "N", c.soliton.N),
        boolean("soliton", "normalize", c.soliton.normalize),
        str("spectral", "sector", c.spectral.sector),
        num("spectral", "r_window", c.spectral.r_window),
        num("spectral", "tolerance", c.spectral.tolerance),
        num("spectral", "bound_tol", c.spectral.bound_tol),
        Field{"hardy", "alpha", [&c](const std::string& v) { c.hardy.alpha = to_list("alpha", v); },
              [&c] {
                  std::string s;
                  for (std::size_t i = 0; i < c.hardy.alpha.size(); ++i) s += (i ? "," : "") + fmt(c.hardy.alpha[i]);
                  return s;
              }},
        size("hardy", "count", c.hardy.count),
        num("flow", "amplitude", c.flow.amplitude),
        str("flow", "shape", c.flow.shape),
        num("flow", "dt_safety", c.flow.dt_safety),
        num("flow", "horizon", c.flow.horizon),
        num("flow", "sample_dt", c.flow.sample_dt),
        num("flow", "r_window", c.flow.r_window),
        num("flow", "support_lo", c.flow.support_lo),
        num("flow", "support_hi", c.flow.support_hi),
        boolean("flow", "deturck", c.flow.deturck),
        num("check", "identity_tol", c.check.identity_tol),
        Field{"run", "seed", [&c](const std::string& v) { c.seed = to_u64("seed", v); }, [&c] { return std::to_string(c.seed); }},
        str("run", "out", c.out),
    };
}

void range(bool ok, const std::string& what) {
    if (!ok) invalid(what);
}

} // namespace

void validate(const RunConfig& c) {
    const auto& s = c.soliton;
    range(s.kind == "shoot" || s.kind == "cigar" || s.kind == "gaussian_expander" || s.kind == "flat_steady",
          "soliton.kind must be shoot, cigar, gaussian_expander or flat_steady");
    range(s.epsilon == 0 || s.epsilon == 1, "soliton.epsilon must be 0 (steady) or 1 (expanding)");
    range(s.n >= 2 && s.n <= 12, "soliton.n must lie in [2, 12]");
    range(s.s > 0.0 && s.s <= 100.0, "soliton.s must lie in (0, 100]");
    range(s.r_max > 0.0 && s.r_max <= 1000.0, "soliton.r_max must lie in (0, 1000]");
    range(s.ode_tol >= 1e-14 && s.ode_tol <= 1e-3, "soliton.ode_tol must lie in [1e-14, 1e-3]");
    range(s.N >= 16 && s.N <= 1000000, "soliton.N must lie in [16, 1e6] (grid too coarse or too large)");
    const auto& p = c.spectral;
    range(p.sector == "scalar" || p.sector == "tensor" || p.sector == "diagonal_tensor",
          "spectral.sector must be scalar or tensor");
    range(p.r_window > 0.0, "spectral.r_window must be positive");
    range(p.tolerance >= 1e-14 && p.tolerance <= 1e-3, "spectral.tolerance must lie in [1e-14, 1e-3]");
    range(p.bound_tol >= 0.0 && p.bound_tol <= 1.0, "spectral.bound_tol must lie in [0, 1]");
    for (double a : c.hardy.alpha) range(a > 0.0 && a <= 1.0, "hardy.alpha entries must lie in (0, 1]");
    range(c.hardy.count >= 1 && c.hardy.count <= 100000, "hardy.count must lie in [1, 100000]");
    const auto& f = c.flow;
    range(f.amplitude >= 0.0 && f.amplitude <= 0.1, "flow.amplitude must lie in [0, 0.1]");
    range(f.shape == "bump_psi" || f.shape == "bump_xi" || f.shape == "random_highfreq",
          "flow.shape must be bump_psi, bump_xi or random_highfreq");
    range(f.dt_safety > 0.0 && f.dt_safety <= 100.0, "flow.dt_safety must lie in (0, 100]");
    range(f.horizon > 0.0 && f.horizon <= 1000.0, "flow.horizon must lie in (0, 1000]");
    range(f.sample_dt > 0.0 && f.sample_dt <= f.horizon, "flow.sample_dt must lie in (0, horizon]");
    range(f.r_window > 0.0, "flow.r_window must be positive");
    range(f.support_lo > 0.0 && f.support_lo < f.support_hi && f.support_hi < 1.0,
          "flow support must satisfy 0 < support_lo < support_hi < 1");
    range(c.check.identity_tol > 0.0, "check.identity_tol must be positive");
    range(!c.out.empty(), "run.out must not be empty");
}

RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        invalid(std::string("malformed config: ") + e.what());
    }
    RunConfig c;
    auto table = fields(c);
    for (const auto& [section, body] : tree) {
        if (body.empty()) invalid("key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.section == section && f.key == key; });
            if (it == table.end()) invalid("unknown key '" + section + "." + key + "'");
            it->set(value.get_value<std::string>());
        }
    }
    validate(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) invalid("cannot read config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_ini(const RunConfig& c0) {
    RunConfig c = c0;
    std::ostringstream os;
    std::string current;
    for (const auto& f : fields(c)) {
        if (f.section != current) {
            if (!current.empty()) os << '\n';
            os << '[' << f.section << "]\n";
            current = f.section;
        }
        os << f.key << " = " << f.get() << '\n';
    }
    return os.str();
}

std::string config_hash(const RunConfig& c) {
    // the output directory does not change results
    RunConfig k = c;
    k.out = "out";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_ini(k)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void apply_override(RunConfig& c, const std::string& key, double value) {
    auto table = fields(c);
    std::vector<Field*> hits;
    for (auto& f : table)
        if (f.section + "." + f.key == key || f.key == key) hits.push_back(&f);
    if (hits.empty()) invalid("unknown sweep key '" + key + "'");
    if (hits.size() > 1) invalid("ambiguous sweep key '" + key + "', qualify it with its section");
    std::string v = fmt(value);
    // integer keys accept whole values only
    if (hits[0]->key == "N" || hits[0]->key == "n" || hits[0]->key == "epsilon" || hits[0]->key == "count" ||
        hits[0]->key == "seed") {
        if (value != std::floor(value) || value < 0.0) invalid("sweep key '" + key + "' needs whole values");
        v = std::to_string(static_cast<long long>(value));
    }
    hits[0]->set(v);
    validate(c);
}

SweepSpec parse_sweep(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) invalid("sweep must look like key=lo:hi:step");
    SweepSpec out;
    out.key = s.substr(0, eq);
    std::vector<double> parts;
    std::stringstream ss(s.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(to_double("sweep", item));
    if (parts.size() != 3) invalid("sweep must look like key=lo:hi:step");
    const double lo = parts[0], hi = parts[1], step = parts[2];
    if (!(step > 0.0) || hi < lo) invalid("sweep needs lo <= hi and step > 0");
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 10000) invalid("sweep has more than 10000 points");
    for (std::size_t k = 0; k < count; ++k) out.values.push_back(std::round((lo + static_cast<double>(k) * step) * 1e12) / 1e12);
    return out;
}

} // namespace solstab::cli
