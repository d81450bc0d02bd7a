#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bib/error.hpp"
#include "bib/kvtext.hpp"
#include "bib/quant_scheme.hpp"

namespace bib {

void QuantScheme::validate() const {
    spec.validate();
    const auto D = static_cast<std::size_t>(spec.bits);
    if (alpha.alpha.size() != D) throw DatasetError("scheme: alpha has wrong length", layer_id);
    if (alpha.support != support_of(alpha.alpha)) {
        throw DatasetError("scheme: support does not match the nonzero coefficients", layer_id);
    }
    if (effective_rate != alpha.rate() || effective_rate > spec.bits) {
        throw DatasetError("scheme: effective_rate must equal |support| <= D", layer_id);
    }
    if (!t_per_sample.empty()) {
        const double worst = *std::max_element(t_per_sample.begin(), t_per_sample.end());
        if (!(worst == psnr_loss_db)) throw DatasetError("scheme: psnr_loss_db must equal max_i t_i", layer_id);
    }
    if (!threshold_unmet && psnr_loss_db > threshold_db) {
        throw DatasetError("scheme: accepted scheme exceeds its PSNR-loss threshold", layer_id);
    }
}

std::string scheme_to_string(const QuantScheme& s) {
    s.validate();
    KeyValueDoc doc;
    doc.comment("bitwise information bottleneck quantization scheme");
    doc.set("schema_version", std::to_string(kSchemeVersion));
    doc.set("layer", std::to_string(s.layer_id));
    doc.set("D", std::to_string(s.spec.bits));
    doc.set("init_quantizer", std::string(to_string(s.spec.kind)));
    doc.set("clip_lo", format_hex(s.spec.clip_lo));
    doc.set("clip_hi", format_hex(s.spec.clip_hi));
    doc.set("scale", format_hex(s.spec.scale));
    for (std::size_t j = 0; j < s.alpha.alpha.size(); ++j) {
        doc.set("alpha[" + std::to_string(j + 1) + "]", format_hex(s.alpha.alpha[j]));
    }
    std::string support;
    for (std::size_t i = 0; i < s.alpha.support.size(); ++i) {
        support += (i ? "," : "") + std::to_string(s.alpha.support[i]);
    }
    doc.set("support", support);
    doc.set("effective_rate", std::to_string(s.effective_rate));
    doc.set("lambda", format_hex(s.lambda));
    doc.set("residual_sse", format_hex(s.alpha.residual_sse));
    doc.set("psnr_db", format_hex(s.psnr_db));
    doc.set("psnr_loss_db", format_hex(s.psnr_loss_db));
    doc.set("threshold_db", format_hex(s.threshold_db));
    doc.set("threshold_unmet", s.threshold_unmet ? "true" : "false");
    doc.set("num_samples", std::to_string(s.t_per_sample.size()));
    for (std::size_t i = 0; i < s.t_per_sample.size(); ++i) {
        doc.set("t[" + std::to_string(i + 1) + "]", format_hex(s.t_per_sample[i]));
    }
    return doc.to_string();
}

void write_scheme(const QuantScheme& scheme, const std::filesystem::path& path) {
    write_file_atomic(path, scheme_to_string(scheme));
}

QuantScheme parse_scheme(const std::string& text, const std::string& source) {
    const auto doc = KeyValueDoc::parse(text, source);
    const auto version = doc.require_int("schema_version");
    if (version != kSchemeVersion) {
        throw SchemaVersionError(source + ": scheme schema_version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kSchemeVersion) + ")");
    }
    QuantScheme s;
    s.layer_id = static_cast<int>(doc.require_int("layer"));
    s.spec.bits = static_cast<int>(doc.require_int("D"));
    s.spec.kind = parse_quantizer_kind(doc.require("init_quantizer"));
    s.spec.clip_lo = doc.require_real("clip_lo");
    s.spec.clip_hi = doc.require_real("clip_hi");
    s.spec.scale = doc.require_real("scale");
    s.spec.validate();
    for (int j = 1; j <= s.spec.bits; ++j) {
        s.alpha.alpha.push_back(doc.require_real("alpha[" + std::to_string(j) + "]"));
    }
    if (doc.contains("alpha[" + std::to_string(s.spec.bits + 1) + "]")) {
        throw DatasetError(source + ": more alpha entries than D");
    }
    const auto& support = doc.require("support");
    std::size_t start = 0;
    while (start < support.size()) {
        auto comma = support.find(',', start);
        if (comma == std::string::npos) comma = support.size();
        s.alpha.support.push_back(static_cast<int>(parse_int(support.substr(start, comma - start), "support")));
        start = comma + 1;
    }
    s.effective_rate = static_cast<int>(doc.require_int("effective_rate"));
    s.lambda = doc.require_real("lambda");
    s.alpha.lambda = s.lambda;
    s.alpha.residual_sse = doc.require_real("residual_sse");
    s.psnr_db = doc.require_real("psnr_db");
    s.psnr_loss_db = doc.require_real("psnr_loss_db");
    s.threshold_db = doc.require_real("threshold_db");
    s.threshold_unmet = doc.require_bool("threshold_unmet");
    const auto n = doc.require_int("num_samples");
    for (std::int64_t i = 1; i <= n; ++i) s.t_per_sample.push_back(doc.require_real("t[" + std::to_string(i) + "]"));
    s.validate();
    return s;
}

QuantScheme read_scheme(const std::filesystem::path& path) {
    const auto doc = KeyValueDoc::load(path);  // surfaces missing files as DatasetError
    return parse_scheme(doc.to_string(), path.string());
}

std::string SweepTrace::to_csv() const {
    std::string out = "lambda,d,psnr_db,psnr_loss_db\n";
    char buf[160];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g\n", p.lambda, p.rate, p.psnr_db, p.psnr_loss_db);
        out += buf;
    }
    return out;
}

void write_trace(const SweepTrace& trace, const std::filesystem::path& path) {
    write_file_atomic(path, trace.to_csv());
}

}  // namespace bib
