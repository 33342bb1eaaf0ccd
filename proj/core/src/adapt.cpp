#include "geoadapt/adapt.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace geoadapt::adapt {

std::vector<EpochLoss> train_adapt(model::ModelBundle<float>& m,
                                   const std::vector<std::vector<int>>& docs,
                                   const std::vector<std::array<double, 2>>& geotags,
                                   const AdaptConfig& cfg) {
    if (docs.empty()) throw Error("train_adapt: empty corpus");
    if (cfg.epochs == 0) throw Error("train_adapt: epochs must be positive");
    if (cfg.batch_size == 0) throw Error("train_adapt: batch_size must be positive");
    if (cfg.lr <= 0.0) throw Error("train_adapt: learning rate must be positive");
    cfg.mask.validate();
    bool uses_geo = regime_uses_geo(cfg.regime);
    if (uses_geo && geotags.size() != docs.size())
        throw Error("train_adapt: geotag count does not match corpus");

    std::vector<std::array<double, 2>> geo_std(docs.size(), {0.0, 0.0});
    if (uses_geo) {
        std::vector<cluster::GeoPoint> pts(geotags.begin(), geotags.end());
        cluster::CoordStats stats = cluster::CoordStats::fit(pts);
        m.geo_stats = stats;
        for (size_t i = 0; i < geotags.size(); ++i)
            geo_std[i] = stats.standardize({geotags[i][0], geotags[i][1]});
    }

    // Fresh optimizer per training phase.
    for (auto& [name, p] : m.store.entries()) {
        std::fill(p.m.data.begin(), p.m.data.end(), 0.0f);
        std::fill(p.v.data.begin(), p.v.data.end(), 0.0f);
    }
    m.store.set_step(0);
    m.meta.regime = regime_name(cfg.regime);

    std::vector<EpochLoss> curve;
    curve.reserve(cfg.epochs);
    std::vector<size_t> order(docs.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng::stream(cfg.seed, epoch);
        rng.shuffle(order);
        double sum_mlm = 0.0, sum_geo = 0.0, sum_total = 0.0;
        size_t steps = 0;

        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::vector<int>> chunk;
            std::vector<std::array<double, 2>> chunk_geo;
            chunk.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                chunk.push_back(docs[order[i]]);
                chunk_geo.push_back(geo_std[order[i]]);
            }

            nn::Tape<float> tape;
            MaskedBatch mb = mask_batch(chunk, m.vocab, cfg.mask, m.config.max_len, rng);
            model::ForwardOptions opts;
            opts.train = true;
            opts.dropout_rng = &rng;
            LossVars<float> losses = build_losses(tape, m, mb, cfg.regime, chunk_geo, opts);

            double l_total = tape.val(losses.total).data[0];
            if (!std::isfinite(l_total))
                throw Error("train_adapt: non-finite loss at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(steps));
            tape.backward(losses.total);
            nn::harvest_grads(tape, m.store);
            m.store.adam_step(cfg.lr);

            sum_total += l_total;
            if (losses.mlm) sum_mlm += tape.val(*losses.mlm).data[0];
            if (losses.geo) sum_geo += tape.val(*losses.geo).data[0];
            ++steps;
        }

        EpochLoss rec;
        rec.epoch = epoch;
        rec.l_mlm = sum_mlm / static_cast<double>(steps);
        if (uses_geo) rec.l_geo = sum_geo / static_cast<double>(steps);
        rec.l_total = sum_total / static_cast<double>(steps);
        rec.eta_mlm = m.store.at("uncertainty.eta_mlm").value.data[0];
        rec.eta_geo = m.store.at("uncertainty.eta_geo").value.data[0];
        curve.push_back(rec);
        m.meta.epoch = epoch + 1;
        if (cfg.on_epoch) cfg.on_epoch(epoch, m);
    }
    return curve;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string curve_to_csv(const std::vector<EpochLoss>& curve) {
    std::string out = "epoch,l_mlm,l_geo,l_total,eta_mlm,eta_geo\n";
    for (const auto& e : curve) {
        out += std::to_string(e.epoch);
        out += ',';
        out += fmt(e.l_mlm);
        out += ',';
        out += std::isnan(e.l_geo) ? "nan" : fmt(e.l_geo);
        out += ',';
        out += fmt(e.l_total);
        out += ',';
        out += fmt(e.eta_mlm);
        out += ',';
        out += fmt(e.eta_geo);
        out += '\n';
    }
    return out;
}

std::vector<EpochLoss> curve_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,l_mlm,l_geo,l_total,eta_mlm,eta_geo")
        throw Error("loss curve CSV: bad header");
    std::vector<EpochLoss> curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cell;
        std::istringstream row(line);
        while (std::getline(row, cell, ',')) fields.push_back(cell);
        if (fields.size() != 6) throw Error("loss curve CSV: malformed row '" + line + "'");
        EpochLoss e;
        try {
            // stod accepts "nan", which stream extraction does not.
            e.epoch = static_cast<size_t>(std::stoull(fields[0]));
            e.l_mlm = std::stod(fields[1]);
            e.l_geo = std::stod(fields[2]);
            e.l_total = std::stod(fields[3]);
            e.eta_mlm = std::stod(fields[4]);
            e.eta_geo = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw Error("loss curve CSV: malformed row '" + line + "'");
        }
        curve.push_back(e);
    }
    return curve;
}

}  // namespace geoadapt::adapt
