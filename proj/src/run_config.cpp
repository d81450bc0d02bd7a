#include "bib/run_config.hpp"

#include <algorithm>
#include <cmath>

#include "bib/error.hpp"

namespace bib {

void RunConfig::validate() const {
    if (bits < 1 || bits > kMaxBits) throw ConfigError("bits must be in [1, 16]");
    if (clip.kind == ClipRule::Kind::percentile && !(clip.percentile > 0.0 && clip.percentile <= 100.0)) {
        throw ConfigError("clip percentile must be in (0, 100]");
    }
    if (!(threshold_db >= 0.0)) throw ConfigError("threshold_db must be >= 0");
    if (!(lambda_min_factor > 0.0) || !(lambda_max_factor >= lambda_min_factor) || !std::isfinite(lambda_max_factor)) {
        throw ConfigError("lambda factors must satisfy 0 < min <= max");
    }
    if (lambda_points < 1) throw ConfigError("lambda_points must be >= 1");
    if (n_fit < 0) throw ConfigError("n_fit must be >= 0 (0 selects the default)");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    if (!(baseline_ops > 0.0) || !(baseline_mem > 0.0)) throw ConfigError("baselines must be positive");
}

int RunConfig::fit_samples(int num_samples) const {
    return n_fit == 0 ? std::min(num_samples, kDefaultFitSamples) : std::min(n_fit, num_samples);
}

QuantizerPlan RunConfig::plan() const { return {quantizer, bits, clip}; }

BottleneckOptions RunConfig::bottleneck_options() const {
    BottleneckOptions o;
    o.threshold_db = threshold_db;
    o.grid.min_factor = lambda_min_factor;
    o.grid.max_factor = lambda_max_factor;
    o.grid.points = lambda_points;
    o.solver.nonnegative = nonnegative;
    o.reference = loss_reference;
    return o;
}

KeyValueDoc RunConfig::to_doc() const {
    KeyValueDoc doc;
    doc.set("config_version", std::to_string(kConfigVersion));
    doc.set("dataset", dataset.string());
    doc.set("quantizer", std::string(to_string(quantizer)));
    doc.set("bits", std::to_string(bits));
    doc.set("clip", clip.to_string());
    doc.set("threshold_db", format_real(threshold_db));
    doc.set("lambda_min_factor", format_real(lambda_min_factor));
    doc.set("lambda_max_factor", format_real(lambda_max_factor));
    doc.set("lambda_points", std::to_string(lambda_points));
    doc.set("n_fit", std::to_string(n_fit));
    doc.set("nonnegative", nonnegative ? "true" : "false");
    doc.set("loss_reference", std::string(to_string(loss_reference)));
    doc.set("output", output.string());
    doc.set("seed", std::to_string(seed));
    doc.set("jobs", std::to_string(jobs));
    doc.set("baseline_ops", format_real(baseline_ops));
    doc.set("baseline_mem", format_real(baseline_mem));
    return doc;
}

RunConfig RunConfig::from_doc(const KeyValueDoc& doc) {
    const auto version = doc.require_int("config_version");
    if (version != kConfigVersion) {
        throw SchemaVersionError(doc.source() + ": config_version " + std::to_string(version) + " is not supported");
    }
    static const char* const known[] = {
        "config_version", "dataset",  "quantizer",      "bits",   "clip", "threshold_db",
        "lambda_min_factor", "lambda_max_factor", "lambda_points", "n_fit", "nonnegative", "loss_reference",
        "output", "seed", "jobs", "baseline_ops", "baseline_mem"};
    for (const auto& [k, v] : doc.entries()) {
        if (std::find(std::begin(known), std::end(known), k) == std::end(known)) {
            throw ConfigError(doc.source() + ": unknown config field `" + k + "`");
        }
    }

    RunConfig c;
    if (auto v = doc.get("dataset")) c.dataset = *v;
    if (auto v = doc.get("quantizer")) c.quantizer = parse_quantizer_kind(*v);
    if (auto v = doc.get("bits")) c.bits = static_cast<int>(parse_int(*v, "bits"));
    if (auto v = doc.get("clip")) c.clip = ClipRule::parse(*v);
    if (auto v = doc.get("threshold_db")) c.threshold_db = parse_real(*v, "threshold_db");
    if (auto v = doc.get("lambda_min_factor")) c.lambda_min_factor = parse_real(*v, "lambda_min_factor");
    if (auto v = doc.get("lambda_max_factor")) c.lambda_max_factor = parse_real(*v, "lambda_max_factor");
    if (auto v = doc.get("lambda_points")) c.lambda_points = static_cast<int>(parse_int(*v, "lambda_points"));
    if (auto v = doc.get("n_fit")) c.n_fit = static_cast<int>(parse_int(*v, "n_fit"));
    if (auto v = doc.get("nonnegative")) c.nonnegative = parse_bool(*v, "nonnegative");
    if (auto v = doc.get("loss_reference")) c.loss_reference = parse_loss_reference(*v);
    if (auto v = doc.get("output")) c.output = *v;
    if (auto v = doc.get("seed")) c.seed = static_cast<std::uint64_t>(parse_int(*v, "seed"));
    if (auto v = doc.get("jobs")) c.jobs = static_cast<int>(parse_int(*v, "jobs"));
    if (auto v = doc.get("baseline_ops")) c.baseline_ops = parse_real(*v, "baseline_ops");
    if (auto v = doc.get("baseline_mem")) c.baseline_mem = parse_real(*v, "baseline_mem");
    c.validate();
    return c;
}

void RunConfig::save(const std::filesystem::path& path) const { write_file_atomic(path, to_doc().to_string()); }

RunConfig RunConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return from_doc(KeyValueDoc::load(path));
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.to_doc().to_string() == b.to_doc().to_string();
}

}  // namespace bib
