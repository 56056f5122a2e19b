#ifndef UDOR_OPTIM_HPP
#define UDOR_OPTIM_HPP

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"

namespace udor {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0) || !(eps > 0)) throw ConfigError("adam lr and eps must be > 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("adam betas must lie in [0, 1)");
    if (weight_decay < 0) throw ConfigError("adam weight_decay must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps},
            {"weight_decay", weight_decay}};
  }
  static AdamConfig from_json(const nlohmann::json& j) {
    AdamConfig c;
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.validate();
    return c;
  }
};

// Plain Adam over an explicit parameter list. Moments are eagerly allocated
// and owned here so a checkpoint can capture and restore the exact bytes;
// parameters whose grad is unset are skipped, matching the usual lazy-state
// semantics.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, AdamConfig cfg)
      : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    step_counts_.assign(params_.size(), 0);
    for (auto& p : params_) {
      exp_avg_.push_back(torch::zeros_like(p));
      exp_avg_sq_.push_back(torch::zeros_like(p));
    }
  }

  void step() {
    torch::NoGradGuard no_grad;
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.grad().defined()) continue;
      auto grad = p.grad();
      if (cfg_.weight_decay != 0) grad = grad + cfg_.weight_decay * p;
      ++step_counts_[i];
      exp_avg_[i].mul_(cfg_.beta1).add_(grad, 1 - cfg_.beta1);
      exp_avg_sq_[i].mul_(cfg_.beta2).addcmul_(grad, grad, 1 - cfg_.beta2);
      const double bc1 = 1 - std::pow(cfg_.beta1, double(step_counts_[i]));
      const double bc2 = 1 - std::pow(cfg_.beta2, double(step_counts_[i]));
      auto denom = (exp_avg_sq_[i].sqrt() / std::sqrt(bc2)).add_(cfg_.eps);
      p.addcdiv_(exp_avg_[i], denom, -cfg_.lr / bc1);
    }
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p.grad().defined()) p.mutable_grad().reset();
  }

  const AdamConfig& config() const { return cfg_; }
  void set_config(const AdamConfig& cfg) {
    cfg.validate();
    cfg_ = cfg;
  }
  size_t size() const { return params_.size(); }
  const std::vector<int64_t>& step_counts() const { return step_counts_; }
  const std::vector<torch::Tensor>& exp_avg() const { return exp_avg_; }
  const std::vector<torch::Tensor>& exp_avg_sq() const { return exp_avg_sq_; }

  // restore captured state; sizes must match the parameter list
  void load_state(const std::vector<int64_t>& steps, const std::vector<torch::Tensor>& m,
                  const std::vector<torch::Tensor>& v) {
    if (steps.size() != params_.size() || m.size() != params_.size() || v.size() != params_.size())
      throw FormatError("optimizer state does not match parameter count");
    torch::NoGradGuard no_grad;
    step_counts_ = steps;
    for (size_t i = 0; i < params_.size(); ++i) {
      if (m[i].sizes() != params_[i].sizes() || v[i].sizes() != params_[i].sizes())
        throw FormatError("optimizer moment shape does not match parameter");
      exp_avg_[i].copy_(m[i]);
      exp_avg_sq_[i].copy_(v[i]);
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<torch::Tensor> params_;
  std::vector<int64_t> step_counts_;
  std::vector<torch::Tensor> exp_avg_, exp_avg_sq_;
};

}  // namespace udor

#endif  // UDOR_OPTIM_HPP
