#include "auginv/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {

[[noreturn]] void bad_value(const std::string& where, const std::string& key, const std::string& what) {
    throw ConfigError(where + ": invalid value for '" + key + "': " + what);
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("expected true/false");
}

long long parse_int(const std::string& v) {
    size_t pos = 0;
    long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
}

double parse_real(const std::string& v) {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return out;
}

std::vector<int> parse_int_list(const std::string& v) {
    std::vector<int> out;
    if (trim(v).empty() || v == "none") return out;
    for (const std::string& part : split(v, ',')) out.push_back(static_cast<int>(parse_int(trim(part))));
    return out;
}

std::string format_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out.empty() ? "none" : out;
}

struct KeyHandler {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Key table; snapshot order follows insertion order of this list.
const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
    static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
        std::vector<std::pair<std::string, KeyHandler>> t;
        auto add = [&t](const std::string& name, std::function<void(RunConfig&, const std::string&)> set,
                        std::function<std::string(const RunConfig&)> get) {
            t.push_back({name, {std::move(set), std::move(get)}});
        };

        add("data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
            [](const RunConfig& c) { return c.data_dir; });
        add("out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
            [](const RunConfig& c) { return c.out_dir; });
        add("run_id", [](RunConfig& c, const std::string& v) { c.run_id = v; },
            [](const RunConfig& c) { return c.run_id; });

        add("epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.epochs); });
        add("learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.learning_rate); });
        add("momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.momentum); });
        add("lr_milestones", [](RunConfig& c, const std::string& v) { c.train.lr_milestones = parse_int_list(v); },
            [](const RunConfig& c) { return format_int_list(c.train.lr_milestones); });
        add("lr_decay", [](RunConfig& c, const std::string& v) { c.train.lr_decay = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.lr_decay); });
        add("batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.batch_size); });
        add("m_copies", [](RunConfig& c, const std::string& v) { c.train.m_copies = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.m_copies); });
        add("alpha", [](RunConfig& c, const std::string& v) { c.train.alpha = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.alpha); });
        add("inv_layers", [](RunConfig& c, const std::string& v) { c.train.inv_layers = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.inv_layers); });
        add("invariance_mode", [](RunConfig& c, const std::string& v) { c.train.invariance_mode = parse_bool(v); },
            [](const RunConfig& c) { return c.train.invariance_mode ? "true" : "false"; });
        add("loss_variant",
            [](RunConfig& c, const std::string& v) {
                if (v == "verbatim")
                    c.train.variant = InvarianceVariant::kVerbatim;
                else if (v == "group_mean")
                    c.train.variant = InvarianceVariant::kGroupMean;
                else
                    throw std::invalid_argument("expected verbatim|group_mean");
            },
            [](const RunConfig& c) {
                return c.train.variant == InvarianceVariant::kVerbatim ? "verbatim" : "group_mean";
            });
        add("base_seed",
            [](RunConfig& c, const std::string& v) { c.train.base_seed = static_cast<std::uint64_t>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.base_seed); });
        add("threads", [](RunConfig& c, const std::string& v) { c.train.threads = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.threads); });
        add("train_subset", [](RunConfig& c, const std::string& v) { c.train.train_subset = parse_int(v); },
            [](const RunConfig& c) { return std::to_string(c.train.train_subset); });
        add("width_mult", [](RunConfig& c, const std::string& v) { c.train.width_mult = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.width_mult); });
        add("monitor_invariance",
            [](RunConfig& c, const std::string& v) { c.train.monitor_invariance = parse_bool(v); },
            [](const RunConfig& c) { return c.train.monitor_invariance ? "true" : "false"; });
        add("monitor_every",
            [](RunConfig& c, const std::string& v) { c.train.monitor_every = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.monitor_every); });
        add("checkpoint_every",
            [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); });
        add("grad_clip", [](RunConfig& c, const std::string& v) { c.train.grad_clip = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.grad_clip); });

        add("flip_prob", [](RunConfig& c, const std::string& v) { c.train.scheme.flip_prob = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.flip_prob); });
        add("rotation_deg", [](RunConfig& c, const std::string& v) { c.train.scheme.rotation_deg = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.rotation_deg); });
        add("translate_frac",
            [](RunConfig& c, const std::string& v) { c.train.scheme.translate_frac = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.translate_frac); });
        add("scale_delta", [](RunConfig& c, const std::string& v) { c.train.scheme.scale_delta = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.scale_delta); });
        add("shear_deg", [](RunConfig& c, const std::string& v) { c.train.scheme.shear_deg = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.shear_deg); });
        add("contrast_delta",
            [](RunConfig& c, const std::string& v) { c.train.scheme.contrast_delta = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.contrast_delta); });
        add("brightness_delta",
            [](RunConfig& c, const std::string& v) { c.train.scheme.brightness_delta = parse_real(v); },
            [](const RunConfig& c) { return g9(c.train.scheme.brightness_delta); });

        add("eval_transforms",
            [](RunConfig& c, const std::string& v) { c.eval_transforms = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.eval_transforms); });
        add("eval_references",
            [](RunConfig& c, const std::string& v) { c.eval_references = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.eval_references); });
        add("eval_seed",
            [](RunConfig& c, const std::string& v) { c.eval_seed = static_cast<std::uint64_t>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.eval_seed); });
        add("test_subset", [](RunConfig& c, const std::string& v) { c.test_subset = parse_int(v); },
            [](const RunConfig& c) { return std::to_string(c.test_subset); });
        add("eval_batch", [](RunConfig& c, const std::string& v) { c.eval_batch = static_cast<int>(parse_int(v)); },
            [](const RunConfig& c) { return std::to_string(c.eval_batch); });
        return t;
    }();
    return table;
}

const KeyHandler* find_key(const std::string& key) {
    for (const auto& [name, handler] : key_table())
        if (name == key) return &handler;
    return nullptr;
}

}  // namespace

std::string RunConfig::resolved_run_id() const {
    if (!run_id.empty()) return run_id;
    return std::string(train.invariance_mode ? "invariance" : "baseline") + "-s" + std::to_string(train.base_seed);
}

std::filesystem::path RunConfig::run_dir() const {
    return std::filesystem::path(out_dir) / resolved_run_id();
}

void RunConfig::validate() const {
    train.validate();
    if (eval_transforms < 1) throw ConfigError("eval_transforms must be >= 1");
    if (eval_references < 2) throw ConfigError("eval_references must be >= 2");
    if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
    if (test_subset < 0) throw ConfigError("test_subset must be >= 0");
    const std::string id = resolved_run_id();
    for (char ch : id)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.'))
            throw ConfigError("run_id may only contain [A-Za-z0-9._-]: " + id);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [name, handler] : key_table()) keys.push_back(name);
    return keys;
}

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where) {
    const KeyHandler* handler = find_key(key);
    if (handler == nullptr) throw ConfigError(where + ": unknown configuration key '" + key + "'");
    try {
        handler->set(cfg, value);
    } catch (const std::exception& e) {
        bad_value(where, key, e.what());
    }
}

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
    return cfg;
}

RunConfig parse_run_config(const std::filesystem::path* file, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (file != nullptr) {
        if (!std::filesystem::exists(*file)) throw ConfigError("config file not found: " + file->string());
        cfg = parse_config_text(read_text_file(*file), file->filename().string());
    }
    for (const std::string& kv : overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set " + kv);
    }
    cfg.validate();
    return cfg;
}

std::string config_snapshot(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, handler] : key_table()) out += name + " = " + handler.get(cfg) + "\n";
    return out;
}

}  // namespace auginv
