#include "s3c/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "s3c/errors.hpp"

namespace s3c {

namespace {

// Pixel columns for every rotated view, laid out r * B + b to match the
// rotation-loss batch convention.
MatrixXd rotated_image_stack(const Dataset& data, const std::vector<int>& indices,
                             int rotation_count) {
    const Eigen::Index batch = static_cast<Eigen::Index>(indices.size());
    MatrixXd first = image_batch(data, indices, 0);
    MatrixXd stacked(first.rows(), batch * rotation_count);
    stacked.middleCols(0, batch) = first;
    for (int r = 1; r < rotation_count; ++r) {
        stacked.middleCols(static_cast<Eigen::Index>(r) * batch, batch) =
            image_batch(data, indices, r);
    }
    return stacked;
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
    double lr = cfg.base_lr;
    for (double fraction : cfg.lr_milestones) {
        int milestone = static_cast<int>(fraction * cfg.base_epochs);
        if (epoch >= milestone) lr /= 10.0;
    }
    return lr;
}

SampledWeights draw_weights(const StochasticHead& head, const TrainConfig& cfg, Rng& rng) {
    if (cfg.stochastic) return sample_weights(head, rng);
    return weights_from_noise(head,
                              MatrixXd::Zero(head.feature_dim(), head.flat_count()));
}

}  // namespace

void TrainConfig::validate() const {
    if (base_epochs < 0 || incremental_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(base_lr > 0.0) || !(incremental_lr > 0.0)) {
        throw ConfigError("learning rates must be positive");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (sigma_lr_scale < 0.0) throw ConfigError("sigma_lr_scale must be >= 0");
    if (lambda_proto < 0.0 || lambda_s3c < 0.0) throw ConfigError("lambdas must be >= 0");
    if (!(scale > 0.0)) throw ConfigError("scale must be positive");
    if (rotation_count < 1) throw ConfigError("rotation_count must be >= 1");
    if (base_sigma < 0.0) throw ConfigError("base_sigma must be >= 0");
    double previous = 0.0;
    for (double fraction : lr_milestones) {
        if (fraction <= previous || fraction >= 1.0) {
            throw ConfigError("lr milestones must be increasing fractions in (0, 1)");
        }
        previous = fraction;
    }
}

SessionState make_initial_state(FeatureExtractor extractor, const TrainConfig& cfg) {
    cfg.validate();
    int dim = extractor.feature_dim();
    return SessionState{std::move(extractor),
                        StochasticHead(dim, cfg.rotation_count, cfg.scale), PrototypeStore{}, 0};
}

void sgd_step(Eigen::Ref<VectorXd> params, Eigen::Ref<VectorXd> velocity,
              const Eigen::Ref<const VectorXd>& grads, const Eigen::Ref<const VectorXd>& mask,
              double lr, double momentum) {
    if (params.size() != velocity.size() || params.size() != grads.size() ||
        params.size() != mask.size()) {
        throw ShapeMismatchError("optimizer step requires congruent shapes");
    }
    velocity = momentum * velocity + mask.cwiseProduct(grads);
    params -= lr * mask.cwiseProduct(velocity);
}

HeadOptimizer::HeadOptimizer(const StochasticHead& head)
    : mean_velocity(MatrixXd::Zero(head.feature_dim(), head.flat_count())),
      sigma_velocity(MatrixXd::Zero(head.feature_dim(), head.class_count())) {}

void apply_head_step(StochasticHead& head, HeadOptimizer& optimizer, const LossValue& grads,
                     const GradientMask& mask, double lr, double momentum, double weight_decay,
                     double sigma_lr) {
    if (optimizer.mean_velocity.cols() != head.flat_count() ||
        optimizer.sigma_velocity.cols() != head.class_count()) {
        throw ShapeMismatchError("optimizer buffers do not match the head");
    }
    if (grads.d_means.cols() != head.flat_count() ||
        grads.d_sigma.cols() != head.class_count()) {
        throw ShapeMismatchError("gradients do not match the head");
    }
    const int m = head.rotation_count();
    for (int pos = 0; pos < head.class_count(); ++pos) {
        ClassHead& c = head.at(pos);
        for (int r = 0; r < m; ++r) {
            Eigen::Index col = head.flat_index(pos, r);
            if (mask.mean_columns(col) == 0.0) continue;  // stays bit-identical
            VectorXd mean = c.means.col(r);
            VectorXd grad = grads.d_means.col(col) + weight_decay * mean;
            VectorXd ones = VectorXd::Ones(mean.size());
            sgd_step(mean, optimizer.mean_velocity.col(col), grad, ones, lr, momentum);
            c.means.col(r) = mean;
        }
        if (mask.sigma_columns(pos) == 0.0) continue;
        // No decay on sigma: it is a noise scale, not a weight norm, and the
        // loss itself supplies the pressure toward smaller values.
        VectorXd ones = VectorXd::Ones(c.sigma.size());
        sgd_step(c.sigma, optimizer.sigma_velocity.col(pos), grads.d_sigma.col(pos), ones,
                 sigma_lr, momentum);
        c.sigma = c.sigma.cwiseMax(0.0);
    }
}

BackboneOptimizer::BackboneOptimizer(const FeatureExtractor& extractor)
    : velocity(VectorXd::Zero(extractor.parameter_count())) {}

void apply_backbone_step(FeatureExtractor& extractor, BackboneOptimizer& optimizer,
                         const BackboneGradients& grads, double lr, double momentum,
                         double weight_decay) {
    VectorXd params = extractor.parameters_flat();
    VectorXd flat_grads = grads.flat() + weight_decay * params;
    VectorXd ones = VectorXd::Ones(params.size());
    sgd_step(params, optimizer.velocity, flat_grads, ones, lr, momentum);
    extractor.set_parameters_flat(params);
}

TrainLog train_base(SessionState& state, const Dataset& data, const SessionPlan& plan,
                    const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (state.completed_sessions != 0) throw Error("base session already trained");
    if (state.extractor.frozen()) throw Error("base training needs an unfrozen extractor");
    if (state.head.class_count() != 0) throw Error("base training expects an empty head");

    const int dim = state.extractor.feature_dim();
    // Unit-variance means give ||mean|| ~ sqrt(d), so the sampled-weight
    // perturbation sigma*eps stays a ~sigma fraction of the weight at any
    // feature dimension. Cosine scoring ignores the absolute magnitude.
    for (int class_id : plan.tasks.at(0).class_ids) {
        ClassHead c;
        c.task_id = 0;
        c.class_id = class_id;
        c.means = rng.gaussian_matrix(dim, cfg.rotation_count);
        c.sigma = VectorXd::Constant(dim, cfg.stochastic ? cfg.base_sigma : 0.0);
        state.head.add_class(std::move(c));
    }

    std::vector<int> pool = session_train_indices(data, plan, 0);
    GradientMask mask = GradientMask::allow_all(state.head);
    HeadOptimizer head_opt(state.head);
    BackboneOptimizer backbone_opt(state.extractor);

    // Weight sampling gets its own stream so a run with sigma pinned to zero
    // sees the same shuffles and batches as a stochastic run with the same
    // seed; ablation pairs then differ only in the noise itself.
    Rng noise_rng = rng.split();

    TrainLog log;
    for (int epoch = 0; epoch < cfg.base_epochs; ++epoch) {
        double lr = scheduled_lr(cfg, epoch);
        shuffle(pool, rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < pool.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop = std::min(pool.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<int> batch(pool.begin() + static_cast<std::ptrdiff_t>(start),
                                   pool.begin() + static_cast<std::ptrdiff_t>(stop));
            std::vector<int> labels;
            labels.reserve(batch.size());
            for (int index : batch) {
                labels.push_back(data.samples[static_cast<std::size_t>(index)].class_id);
            }
            MatrixXd stacked = rotated_image_stack(data, batch, cfg.rotation_count);
            ForwardCache cache = state.extractor.forward(stacked);
            SampledWeights sampled = draw_weights(state.head, cfg, noise_rng);
            LossValue loss = s3c_loss_batch(state.head, sampled, cache.features(), labels, mask,
                                            /*want_feature_grads=*/true);
            BackboneGradients backbone_grads = state.extractor.backward(cache, loss.d_features);
            apply_head_step(state.head, head_opt, loss, mask, lr, cfg.momentum,
                            cfg.weight_decay, lr * cfg.sigma_lr_scale);
            apply_backbone_step(state.extractor, backbone_opt, backbone_grads, lr, cfg.momentum,
                                cfg.weight_decay);
            loss_sum += loss.value * static_cast<double>(batch.size());
        }
        log.epoch_mean_loss.push_back(loss_sum / static_cast<double>(pool.size()));
    }

    state.extractor.freeze();
    state.prototypes = PrototypeStore(parameter_fingerprint(state.extractor));
    update_store(state.prototypes, compute_prototypes(state.extractor, data, pool,
                                                      plan.tasks.at(0).class_ids, 0));
    state.completed_sessions = 1;
    return log;
}

TrainLog train_incremental(SessionState& state, const Dataset& data, const SessionPlan& plan,
                           int task, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (task < 1 || task >= plan.session_count()) throw Error("task out of range");
    if (state.completed_sessions != task) {
        throw Error("sessions must be trained in order; expected task " +
                    std::to_string(state.completed_sessions));
    }
    if (!state.extractor.frozen()) throw Error("incremental training needs a frozen extractor");
    for (int class_id : plan.classes_up_to(task - 1)) {
        if (!state.prototypes.has_class(class_id)) {
            throw MissingPrototypesError("class " + std::to_string(class_id) +
                                         " has no stored prototype");
        }
    }

    std::vector<int> shot_indices = session_train_indices(data, plan, task);
    std::map<int, std::vector<int>> shots_by_class;
    for (int index : shot_indices) {
        shots_by_class[data.samples[static_cast<std::size_t>(index)].class_id].push_back(index);
    }
    for (int class_id : plan.tasks.at(static_cast<std::size_t>(task)).class_ids) {
        std::vector<int>& group = shots_by_class[class_id];
        std::sort(group.begin(), group.end());
        std::vector<ImageGrid> shots;
        shots.reserve(group.size());
        for (int index : group) shots.push_back(data.image(index));
        init_new_class(state.head, state.extractor, task, class_id, shots, data.embeddings);
    }

    std::vector<int> labels;
    labels.reserve(shot_indices.size());
    for (int index : shot_indices) {
        labels.push_back(data.samples[static_cast<std::size_t>(index)].class_id);
    }
    // The extractor is frozen, so shot features and prototypes are constants.
    MatrixXd rotated_features =
        state.extractor.features(rotated_image_stack(data, shot_indices, cfg.rotation_count));
    MatrixXd prototypes = state.prototypes.matrix();
    std::vector<int> prototype_ids = state.prototypes.class_ids();

    GradientMask mask = GradientMask::incremental(state.head, task);
    HeadOptimizer head_opt(state.head);

    Rng noise_rng = rng.split();  // see train_base

    TrainLog log;
    for (int epoch = 0; epoch < cfg.incremental_epochs; ++epoch) {
        SampledWeights sampled = draw_weights(state.head, cfg, noise_rng);
        LossValue loss = incremental_loss_batch(state.head, sampled, rotated_features, labels,
                                                prototypes, prototype_ids, cfg.lambda_proto,
                                                cfg.lambda_s3c, mask,
                                                /*want_feature_grads=*/false);
        apply_head_step(state.head, head_opt, loss, mask, cfg.incremental_lr, cfg.momentum,
                        cfg.weight_decay, cfg.incremental_lr * cfg.sigma_lr_scale);
        log.epoch_mean_loss.push_back(loss.value);
    }

    update_store(state.prototypes,
                 compute_prototypes(state.extractor, data, shot_indices,
                                    plan.tasks.at(static_cast<std::size_t>(task)).class_ids, task));
    state.completed_sessions = task + 1;
    return log;
}

}  // namespace s3c
