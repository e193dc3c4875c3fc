#include "moek/quant/layer.hpp"

#include "moek/error.hpp"
#include "moek/numkit/linalg.hpp"

#include <iostream>
#include <string>

namespace moek::quant {

double output_mse(const Matrix& wq, const Matrix& xq, const Matrix& reference)
{
    const Matrix out = numkit::matmul(wq, xq);
    const double norm = numkit::frobenius_norm(out - reference);
    return reference.size() == 0 ? 0.0 : norm * norm / static_cast<double>(reference.size());
}

LayerQuantResult quantize_layer(const Matrix& w, const Matrix& x_calib, const LayerOptions& opts)
{
    if (w.cols() != x_calib.rows())
        throw ShapeError("weights have " + std::to_string(w.cols()) + " input channels, calibration has " +
                         std::to_string(x_calib.rows()));
    if (x_calib.cols() < kRecommendedCalibrationTokens)
        std::cerr << "warning: only " << x_calib.cols() << " calibration tokens (recommended >= "
                  << kRecommendedCalibrationTokens << ")\n";

    LayerQuantResult result;
    result.smoothing = search_smoothing(w, x_calib, opts.quant, opts.grid_steps);
    auto [ws, xs] = apply_smoothing(w, x_calib, result.smoothing.factors);

    const Matrix h = build_hessian(xs, opts.damping);
    result.ordering = opts.ordering;
    const Permutation order = channel_order(xs, opts.ordering);
    if (opts.ordering != Ordering::none)
        result.order = order;
    result.weights = hessian_quantize(ws, h, opts.quant.weights, order);

    const auto xq = rtn_quantize(xs, opts.quant.activations);
    result.act_params = xq.params;

    const Matrix reference = numkit::matmul(w, x_calib);
    result.output_mse = output_mse(dequantize(result.weights), dequantize(xq), reference);
    result.rtn_baseline_mse = output_mse(fake_quantize(w, opts.quant.weights),
                                         fake_quantize(x_calib, opts.quant.activations), reference);
    return result;
}

namespace {

nlohmann::json params_json(const std::vector<QuantParams>& params)
{
    auto scales = nlohmann::json::array();
    auto zps = nlohmann::json::array();
    for (const auto& p : params) {
        scales.push_back(p.scale);
        zps.push_back(p.zero_point);
    }
    return {{"scales", scales}, {"zero_points", zps}};
}

} // namespace

nlohmann::json to_json(const LayerQuantResult& r)
{
    nlohmann::json doc;
    doc["exponent"] = r.smoothing.exponent;
    doc["factors"] = r.smoothing.factors;
    doc["smoothing_loss"] = r.smoothing.loss;
    doc["bits"] = r.weights.bits;
    doc["mse"] = r.output_mse;
    doc["rtn_mse"] = r.rtn_baseline_mse;
    doc["ordering"] = {{"strategy", std::string(to_string(r.ordering))},
                       {"permutation", r.order ? nlohmann::json(*r.order) : nlohmann::json(nullptr)}};
    doc["weights"] = {{"rows", r.weights.rows},
                      {"cols", r.weights.cols},
                      {"granularity", std::string(to_string(r.weights.granularity))}};
    doc["weights"].update(params_json(r.weights.params));
    doc["activations"] = params_json(r.act_params);
    return doc;
}

} // namespace moek::quant
