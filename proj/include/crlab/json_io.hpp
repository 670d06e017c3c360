#pragma once

// JSON (de)serialization for sequences and configs, JSONL step logs, and the
// block-table CSV dump. Every output document carries the schema version,
// the stream-derivation version, and the seed that produced it.

#include <ostream>
#include <string>

#include <json.hpp>

#include "backoff.hpp"
#include "blocks.hpp"
#include "rng.hpp"
#include "sequences.hpp"

namespace crlab {

inline constexpr int kSchemaVersion = 1;

using json = nlohmann::json;

inline json to_json(const SendSequence& s) {
    switch (s.kind()) {
    case SendSequence::Kind::Constant:
        return {{"kind", "constant"}, {"c", s.param()}};
    case SendSequence::Kind::Geometric:
        return {{"kind", "geometric"}, {"rho", s.param()}};
    case SendSequence::Kind::Beb:
        return {{"kind", "beb"}};
    case SendSequence::Kind::Polynomial:
        return {{"kind", "polynomial"}, {"alpha", s.param()}};
    case SendSequence::Kind::DoubleExp:
        return {{"kind", "double-exponential"}};
    case SendSequence::Kind::Interleaved:
        return {{"kind", "interleaved"},
                {"rho", s.param()},
                {"splices", s.splices()},
                {"tail", to_json(*s.tail())}};
    case SendSequence::Kind::Explicit:
        return {{"kind", "explicit"},
                {"prefix", s.prefix()},
                {"tail", to_json(*s.tail())}};
    }
    throw SeqError("to_json: bad kind");
}

inline SendSequence sequence_from_json(const json& j) {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant")
        return SendSequence::constant(j.at("c").get<double>());
    if (kind == "geometric")
        return SendSequence::geometric(j.at("rho").get<double>());
    if (kind == "beb") return SendSequence::beb();
    if (kind == "polynomial")
        return SendSequence::polynomial(j.at("alpha").get<double>());
    if (kind == "double-exponential")
        return SendSequence::double_exponential();
    if (kind == "interleaved")
        return SendSequence::interleaved(
            j.at("rho").get<double>(),
            j.at("splices").get<std::vector<long long>>(),
            sequence_from_json(j.at("tail")));
    if (kind == "explicit")
        return SendSequence::explicit_prefix(
            j.at("prefix").get<std::vector<double>>(),
            sequence_from_json(j.at("tail")));
    throw SeqError("sequence_from_json: unknown kind '" + kind + "'");
}

// header object stamped into every CLI output
inline json output_header(std::uint64_t seed) {
    return {{"schema_version", kSchemaVersion},
            {"stream_version", kStreamVersion},
            {"seed", seed}};
}

inline json to_json(const BackoffStepInfo& s) {
    return {{"t", s.t},       {"births", s.births}, {"senders", s.senders},
            {"escape", s.escape}, {"noise", s.noise},   {"balls", s.balls}};
}

inline json overrides_to_json(const BlockOverrides& ov) {
    json j = json::object();
    if (ov.kappa) j["kappa"] = *ov.kappa;
    if (ov.zeta) j["zeta"] = *ov.zeta;
    if (ov.I0) j["I0"] = *ov.I0;
    if (ov.tau_init) j["tau_init"] = *ov.tau_init;
    if (ov.c_init) j["c_init"] = *ov.c_init;
    return j;
}

inline BlockOverrides overrides_from_json(const json& j) {
    BlockOverrides ov;
    if (j.contains("kappa")) ov.kappa = j.at("kappa").get<int>();
    if (j.contains("zeta")) ov.zeta = j.at("zeta").get<double>();
    if (j.contains("I0")) ov.I0 = j.at("I0").get<int>();
    if (j.contains("tau_init")) ov.tau_init = j.at("tau_init").get<long long>();
    if (j.contains("c_init")) ov.c_init = j.at("c_init").get<long long>();
    return ov;
}

inline json table_constants_json(const BlockTable& t) {
    return {{"kappa", t.kappa},     {"zeta", t.zeta},
            {"p_star", t.p_star},   {"j_min", t.j_min},
            {"j0", t.j0},           {"I0", t.I0},
            {"Q", t.Q},             {"tau_init", t.tau_init},
            {"c_init", t.c_init},   {"overrides", overrides_to_json(t.overrides)}};
}

// CSV: constants as comment lines, then one row per block
inline void dump_blocks_csv(const BlockTable& t, std::ostream& os) {
    os << "# kappa=" << t.kappa << " zeta=" << t.zeta << " p_star=" << t.p_star
       << " j_min=" << t.j_min << " j0=" << t.j0 << " I0=" << t.I0
       << " Q=" << t.Q << " tau_init=" << t.tau_init << " c_init=" << t.c_init
       << "\n";
    os << "# overrides=" << overrides_to_json(t.overrides).dump() << "\n";
    os << "i,ell,u,size,W,ceilW,tau\n";
    for (int i = 1; i <= t.num_blocks(); ++i) {
        auto si = static_cast<std::size_t>(i);
        os << i << ',' << t.ell[si] << ',' << t.u[si] << ',' << t.bsize[si]
           << ',' << t.W[si] << ',' << t.ceilW[si] << ',';
        long long idx = i - t.I0;
        if (idx >= 0 && idx < static_cast<long long>(t.tau.size()))
            os << t.tau[static_cast<std::size_t>(idx)];
        os << "\n";
    }
}

} // namespace crlab
