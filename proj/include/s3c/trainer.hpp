#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "s3c/backbone.hpp"
#include "s3c/head.hpp"
#include "s3c/losses.hpp"
#include "s3c/protocol.hpp"
#include "s3c/prototypes.hpp"

namespace s3c {

struct TrainConfig {
    int base_epochs = 60;
    double base_lr = 0.1;
    // Fractions of base_epochs at which the base learning rate divides by 10.
    std::vector<double> lr_milestones = {0.6, 0.8};
    int incremental_epochs = 100;
    double incremental_lr = 0.01;
    int batch_size = 32;
    double momentum = 0.9;
    // L2 pull toward zero on unmasked parameters; keeps cosine weight norms
    // (and sigma) from inflating, which would starve the 1/||w|| gradients.
    double weight_decay = 5e-4;
    double lambda_proto = 5.0;  // weight of the stored-prototype rehearsal term
    double lambda_s3c = 1.0;    // weight of the rotation-prediction term
    double scale = 16.0;        // cosine multiplier eta
    int rotation_count = 4;
    bool stochastic = true;     // false pins every sigma at zero
    double base_sigma = 0.1;    // initial sigma for base classes when stochastic
    // Sigma steps use sigma_lr_scale * lr. The noise scale should adapt more
    // slowly than the decision boundary; at the shared rate it collapses to
    // zero within a few epochs and the stochastic regularization never acts.
    double sigma_lr_scale = 0.1;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

// Everything that survives from one session to the next.
struct SessionState {
    FeatureExtractor extractor;
    StochasticHead head;
    PrototypeStore prototypes;
    int completed_sessions = 0;
};

/// State with an empty classifier bank matching the extractor and config.
SessionState make_initial_state(FeatureExtractor extractor, const TrainConfig& cfg);

struct TrainLog {
    std::vector<double> epoch_mean_loss;
};

/// One masked momentum step: velocity = momentum * velocity + mask .* grads,
/// params -= lr * mask .* velocity. Masked coordinates stay bit-identical.
void sgd_step(Eigen::Ref<VectorXd> params, Eigen::Ref<VectorXd> velocity,
              const Eigen::Ref<const VectorXd>& grads, const Eigen::Ref<const VectorXd>& mask,
              double lr, double momentum);

// Momentum buffers for the classifier bank; fresh (zero) at session start so
// frozen coordinates can never coast on stale velocity.
struct HeadOptimizer {
    MatrixXd mean_velocity;   // d x flat_count
    MatrixXd sigma_velocity;  // d x class_count
    explicit HeadOptimizer(const StochasticHead& head);
};

/// Applies LossValue gradients to the head under the mask, then clamps every
/// sigma entry at zero. `weight_decay * param` joins the gradient of every
/// unmasked coordinate.
void apply_head_step(StochasticHead& head, HeadOptimizer& optimizer, const LossValue& grads,
                     const GradientMask& mask, double lr, double momentum, double weight_decay,
                     double sigma_lr);

struct BackboneOptimizer {
    VectorXd velocity;
    explicit BackboneOptimizer(const FeatureExtractor& extractor);
};

void apply_backbone_step(FeatureExtractor& extractor, BackboneOptimizer& optimizer,
                         const BackboneGradients& grads, double lr, double momentum,
                         double weight_decay);

/// Session 0: initializes base-class heads (unit-variance Gaussian means,
/// constant sigma), optimizes extractor + heads on the rotation loss with the
/// milestone schedule, then freezes the extractor and stores base prototypes.
/// With zero epochs the parameters keep their initial values but prototypes
/// and the freeze still happen.
TrainLog train_base(SessionState& state, const Dataset& data, const SessionPlan& plan,
                    const TrainConfig& cfg, Rng& rng);

/// Session `task` >= 1: initializes the new classes from their shots, then
/// fine-tunes all classifiers on lambda_proto * rehearsal + lambda_s3c *
/// rotation loss. Every epoch is one step over the full shot batch plus all
/// stored prototypes. Old classes update only their rotation-0 mean. New
/// prototypes are appended at exit.
TrainLog train_incremental(SessionState& state, const Dataset& data, const SessionPlan& plan,
                           int task, const TrainConfig& cfg, Rng& rng);

}  // namespace s3c
