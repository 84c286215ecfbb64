#include "clseg/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <concepts>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "clseg/error.hpp"
#include "clseg/importance.hpp"

namespace clseg::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void syntax_error(std::size_t line, const std::string& message) {
    throw ConfigError("config", "line " + std::to_string(line) + ": " + message);
}

// Cuts a trailing comment, ignoring '#' inside quoted strings.
std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && quoted) {
            ++i;
        } else if (s[i] == '"') {
            quoted = !quoted;
        } else if (s[i] == '#' && !quoted) {
            return s.substr(0, i);
        }
    }
    return s;
}

bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    }
    return true;
}

class ValueParser {
public:
    ValueParser(std::string_view text, std::size_t line) : text_(text), line_(line) {}

    ConfigValue parse() {
        skip_space();
        ConfigValue v;
        if (peek() == '[') {
            v = parse_array();
        } else {
            v = parse_scalar();
        }
        skip_space();
        if (pos_ != text_.size()) syntax_error(line_, "unexpected trailing characters");
        return v;
    }

private:
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }

    std::vector<ConfigScalar> parse_array() {
        ++pos_;
        std::vector<ConfigScalar> items;
        skip_space();
        if (peek() == ']') {
            ++pos_;
            return items;
        }
        while (true) {
            skip_space();
            items.push_back(parse_scalar());
            skip_space();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() == ']') {
                ++pos_;
                return items;
            }
            syntax_error(line_, "expected ',' or ']' in array");
        }
    }

    ConfigScalar parse_scalar() {
        if (peek() == '"') return parse_string();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != ' ' &&
               text_[pos_] != '\t') {
            ++pos_;
        }
        const std::string_view token = text_.substr(start, pos_ - start);
        if (token.empty()) syntax_error(line_, "missing value");
        if (token == "true") return true;
        if (token == "false") return false;
        double value = 0.0;
        std::string_view digits = token;
        if (!digits.empty() && digits.front() == '+') digits.remove_prefix(1);
        const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec != std::errc() || end != digits.data() + digits.size()) {
            syntax_error(line_, "cannot parse value '" + std::string(token) + "' (strings need double quotes)");
        }
        return value;
    }

    std::string parse_string() {
        ++pos_;
        std::string out;
        while (pos_ < text_.size()) {
            const char c = text_[pos_++];
            if (c == '"') return out;
            if (c == '\\') {
                if (pos_ >= text_.size()) break;
                const char e = text_[pos_++];
                switch (e) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    default: syntax_error(line_, std::string("unsupported escape '\\") + e + "'");
                }
            } else {
                out += c;
            }
        }
        syntax_error(line_, "unterminated string");
    }

    std::string_view text_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

// Typed access to a parsed document. Every key read is recorded so that
// leftovers can be reported as unknown.
class Fields {
public:
    explicit Fields(const ConfigDocument& doc) : doc_(doc) {}

    const ConfigValue* find(const std::string& section, const std::string& key) {
        const auto s = doc_.find(section);
        if (s == doc_.end()) return nullptr;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return nullptr;
        used_.insert(section + "." + key);
        return &k->second;
    }

    const ConfigScalar* scalar(const std::string& section, const std::string& key) {
        const ConfigValue* v = find(section, key);
        if (v == nullptr) return nullptr;
        const auto* s = std::get_if<ConfigScalar>(v);
        if (s == nullptr) throw ConfigError(section + "." + key, "expected a single value, got an array");
        return s;
    }

    void read(const std::string& section, const std::string& key, double& out) {
        if (const ConfigScalar* s = scalar(section, key)) out = as_double(*s, section + "." + key);
    }

    template <std::unsigned_integral T>
    void read(const std::string& section, const std::string& key, T& out) {
        if (const ConfigScalar* s = scalar(section, key)) out = static_cast<T>(as_count(*s, section + "." + key));
    }

    void read(const std::string& section, const std::string& key, std::string& out) {
        if (const ConfigScalar* s = scalar(section, key)) out = as_string(*s, section + "." + key);
    }

    void read(const std::string& section, const std::string& key, std::vector<std::size_t>& out) {
        for_each_item(section, key, [&](const ConfigScalar& item, const std::string& field) {
            out.push_back(as_count(item, field));
        }, out);
    }

    void read(const std::string& section, const std::string& key, std::vector<std::filesystem::path>& out) {
        for_each_item(section, key, [&](const ConfigScalar& item, const std::string& field) {
            out.emplace_back(as_string(item, field));
        }, out);
    }

    void reject_unknown() const {
        for (const auto& [section, keys] : doc_) {
            for (const auto& [key, value] : keys) {
                if (!used_.contains(section + "." + key)) {
                    throw ConfigError(section + "." + key, "unknown key");
                }
            }
        }
    }

private:
    template <typename Fn, typename Vec>
    void for_each_item(const std::string& section, const std::string& key, Fn fn, Vec& out) {
        const ConfigValue* v = find(section, key);
        if (v == nullptr) return;
        const std::string field = section + "." + key;
        const auto* items = std::get_if<std::vector<ConfigScalar>>(v);
        if (items == nullptr) throw ConfigError(field, "expected an array");
        out.clear();
        for (const auto& item : *items) fn(item, field);
    }

    static double as_double(const ConfigScalar& s, const std::string& field) {
        const auto* d = std::get_if<double>(&s);
        if (d == nullptr) throw ConfigError(field, "expected a number");
        return *d;
    }

    static std::uint64_t as_count(const ConfigScalar& s, const std::string& field) {
        const double d = as_double(s, field);
        if (!(d >= 0.0) || d != std::floor(d) || d > 9.007199254740992e15) {
            throw ConfigError(field, "expected a non-negative integer");
        }
        return static_cast<std::uint64_t>(d);
    }

    static std::string as_string(const ConfigScalar& s, const std::string& field) {
        const auto* str = std::get_if<std::string>(&s);
        if (str == nullptr) throw ConfigError(field, "expected a quoted string");
        return *str;
    }

    const ConfigDocument& doc_;
    std::set<std::string> used_;
};

const std::set<std::string> kSections = {"benchmark", "strategy", "schedule", "network", "run"};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return p.is_absolute() || base.empty() ? p : base / p;
}

} // namespace

ConfigDocument parse_config_document(std::string_view text) {
    ConfigDocument doc;
    std::string section;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;

        const std::string_view line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') syntax_error(line_no, "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!valid_name(section)) syntax_error(line_no, "invalid section name '" + section + "'");
            if (doc.contains(section)) syntax_error(line_no, "section [" + section + "] repeated");
            doc[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) syntax_error(line_no, "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        if (!valid_name(key)) syntax_error(line_no, "invalid key '" + key + "'");
        if (section.empty()) syntax_error(line_no, "key '" + key + "' appears before any [section]");
        auto& entries = doc[section];
        if (entries.contains(key)) throw ConfigError(section + "." + key, "duplicate key");
        entries[key] = ValueParser(line.substr(eq + 1), line_no).parse();
    }
    return doc;
}

void ExperimentConfig::validate() const {
    strategy.validate();
    schedule.validate();
    network.validate();
    if (num_seeds < 1) throw ConfigError("run.num_seeds", "must be >= 1");
    if (output_dir.empty()) throw ConfigError("run.output_dir", "must not be empty");
    if (network.in_channels != 1) throw ConfigError("network.in_channels", "datasets are single-channel; must be 1");
    if (network.dropout_rate != apply_baseline(strategy.kind, strategy).dropout_rate) {
        throw ConfigError("network.dropout_rate", "must follow the strategy's dropout rate");
    }
    if (benchmark.uses_files()) {
        if (benchmark.train_paths.size() != benchmark.eval_paths.size()) {
            throw ConfigError("benchmark.eval_paths", "need one eval dataset per training dataset");
        }
        if (benchmark.train_paths.size() < 2) {
            throw ConfigError("benchmark.train_paths", "need at least 2 domains");
        }
    } else {
        if (benchmark.image_size < 16 || benchmark.image_size % 4 != 0) {
            throw ConfigError("benchmark.image_size", "must be >= 16 and divisible by 4");
        }
        if (benchmark.image_size % network.spatial_divisor() != 0) {
            throw ConfigError("benchmark.image_size",
                              "must be divisible by " + std::to_string(network.spatial_divisor()) +
                                  " for the configured encoder depth");
        }
        if (network.num_classes != 4) {
            throw ConfigError("network.num_classes", "the built-in suite has 4 classes");
        }
    }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides) {
    const ConfigDocument doc = parse_config_document(text);
    for (const auto& [section, keys] : doc) {
        if (!kSections.contains(section)) throw ConfigError(section, "unknown section");
    }
    Fields f(doc);

    std::string kind_name;
    f.read("strategy", "kind", kind_name);
    if (overrides.strategy) kind_name = *overrides.strategy;
    if (kind_name.empty()) throw ConfigError("strategy.kind", "required");

    ExperimentConfig cfg;
    cfg.strategy = StrategyConfig::defaults(parse_strategy(kind_name));
    f.read("strategy", "lambda", cfg.strategy.lambda);
    f.read("strategy", "beta_per_domain", cfg.strategy.beta_per_domain);
    f.read("strategy", "min_importance_to_freeze", cfg.strategy.min_importance_to_freeze);
    f.read("strategy", "l2_coefficient", cfg.strategy.l2_coefficient);
    f.read("strategy", "dropout_rate", cfg.strategy.dropout_rate);
    std::string granularity;
    f.read("strategy", "importance_granularity", granularity);
    if (!granularity.empty()) {
        try {
            cfg.strategy.importance_granularity = parse_granularity(granularity);
        } catch (const ConfigError&) {
            throw ConfigError("strategy.importance_granularity", "expected parameter|kernel|filter");
        }
    }

    f.read("schedule", "epochs_per_domain", cfg.schedule.epochs_per_domain);
    f.read("schedule", "momentum", cfg.schedule.momentum);
    f.read("schedule", "initial_lr", cfg.schedule.initial_lr);
    f.read("schedule", "decay_factor", cfg.schedule.decay_factor);
    f.read("schedule", "decay_every_epochs", cfg.schedule.decay_every_epochs);
    f.read("schedule", "batch_size", cfg.schedule.batch_size);

    f.read("network", "in_channels", cfg.network.in_channels);
    f.read("network", "num_classes", cfg.network.num_classes);
    f.read("network", "encoder_channels", cfg.network.encoder_channels);
    f.read("network", "bottleneck_channels", cfg.network.bottleneck_channels);
    cfg.network.dropout_rate = apply_baseline(cfg.strategy.kind, cfg.strategy).dropout_rate;

    f.read("benchmark", "suite_seed", cfg.benchmark.suite_seed);
    f.read("benchmark", "image_size", cfg.benchmark.image_size);
    f.read("benchmark", "train_paths", cfg.benchmark.train_paths);
    f.read("benchmark", "eval_paths", cfg.benchmark.eval_paths);
    for (auto& p : cfg.benchmark.train_paths) p = resolve(p, base_dir);
    for (auto& p : cfg.benchmark.eval_paths) p = resolve(p, base_dir);

    std::string output_dir;
    f.read("run", "output_dir", output_dir);
    f.read("run", "num_seeds", cfg.num_seeds);
    f.read("run", "base_seed", cfg.base_seed);
    f.reject_unknown();

    if (overrides.seed) cfg.base_seed = *overrides.seed;
    if (overrides.output_dir) {
        cfg.output_dir = *overrides.output_dir;
    } else if (!output_dir.empty()) {
        cfg.output_dir = resolve(output_dir, base_dir);
    } else {
        const char* root = std::getenv(kOutputRootEnv);
        const std::filesystem::path base = root != nullptr && *root != '\0' ? root : "runs";
        cfg.output_dir = base / strategy_name(cfg.strategy.kind);
    }
    cfg.schedule.seed = cfg.base_seed;

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", "cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path(), overrides);
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    auto& b = j["benchmark"];
    if (c.benchmark.uses_files()) {
        b["train_paths"] = nlohmann::ordered_json::array();
        for (const auto& p : c.benchmark.train_paths) b["train_paths"].push_back(p.generic_string());
        b["eval_paths"] = nlohmann::ordered_json::array();
        for (const auto& p : c.benchmark.eval_paths) b["eval_paths"].push_back(p.generic_string());
    } else {
        b["suite_seed"] = c.benchmark.suite_seed;
        b["image_size"] = c.benchmark.image_size;
    }
    auto& s = j["strategy"];
    s["kind"] = strategy_name(c.strategy.kind);
    s["lambda"] = c.strategy.lambda;
    s["beta_per_domain"] = c.strategy.beta_per_domain;
    s["min_importance_to_freeze"] = c.strategy.min_importance_to_freeze;
    s["l2_coefficient"] = c.strategy.l2_coefficient;
    s["dropout_rate"] = c.strategy.dropout_rate;
    s["importance_granularity"] = granularity_name(c.strategy.importance_granularity);
    auto& sc = j["schedule"];
    sc["epochs_per_domain"] = c.schedule.epochs_per_domain;
    sc["momentum"] = c.schedule.momentum;
    sc["initial_lr"] = c.schedule.initial_lr;
    sc["decay_factor"] = c.schedule.decay_factor;
    sc["decay_every_epochs"] = c.schedule.decay_every_epochs;
    sc["batch_size"] = c.schedule.batch_size;
    auto& n = j["network"];
    n["in_channels"] = c.network.in_channels;
    n["num_classes"] = c.network.num_classes;
    n["encoder_channels"] = c.network.encoder_channels;
    n["bottleneck_channels"] = c.network.bottleneck_channels;
    n["dropout_rate"] = c.network.dropout_rate;
    auto& r = j["run"];
    r["output_dir"] = c.output_dir.generic_string();
    r["num_seeds"] = c.num_seeds;
    r["base_seed"] = c.base_seed;
    return j;
}

nlohmann::ordered_json benchmark_identity(const ExperimentConfig& config, const std::vector<DomainDataset>& train,
                                          const std::vector<DomainDataset>& eval) {
    nlohmann::ordered_json j;
    if (config.benchmark.uses_files()) {
        j["source"] = "files";
    } else {
        j["source"] = "suite";
        j["suite_seed"] = config.benchmark.suite_seed;
        j["image_size"] = config.benchmark.image_size;
    }
    j["domains"] = nlohmann::ordered_json::array();
    for (std::size_t d = 0; d < train.size(); ++d) {
        nlohmann::ordered_json dom;
        dom["height"] = train[d].height;
        dom["width"] = train[d].width;
        dom["num_classes"] = train[d].num_classes;
        dom["train_seed"] = train[d].seed;
        dom["train_images"] = train[d].size();
        dom["eval_seed"] = eval[d].seed;
        dom["eval_images"] = eval[d].size();
        j["domains"].push_back(std::move(dom));
    }
    return j;
}

BenchmarkData load_benchmark(const BenchmarkConfig& config) {
    BenchmarkData data;
    if (!config.uses_files()) {
        for (auto& pair : default_four_domain_suite(config.suite_seed, config.image_size)) {
            data.train.push_back(std::move(pair.train));
            data.eval.push_back(std::move(pair.eval));
        }
        return data;
    }
    for (const auto& p : config.train_paths) data.train.push_back(load_dataset(p));
    for (const auto& p : config.eval_paths) data.eval.push_back(load_dataset(p));
    return data;
}

} // namespace clseg::cli
