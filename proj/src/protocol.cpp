#include "s3c/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace s3c {

std::string to_string(Variant variant) {
    switch (variant) {
        case Variant::standard: return "standard";
        case Variant::imbalanced: return "im";
        case Variant::fewer_base: return "lb";
    }
    return "standard";
}

Variant parse_variant(const std::string& text) {
    if (text == "standard") return Variant::standard;
    if (text == "im") return Variant::imbalanced;
    if (text == "lb") return Variant::fewer_base;
    throw ConfigError("unknown variant \"" + text + "\" (expected standard, im or lb)");
}

void ProtocolConfig::validate() const {
    if (base_classes < 1) throw ConfigError("base_classes must be >= 1");
    if (tasks < 0) throw ConfigError("tasks must be >= 0");
    if (ways < 1) throw ConfigError("ways must be >= 1");
    if (variant == Variant::imbalanced) {
        if (shot_list.empty()) {
            throw ConfigError("im variant requires shot_list");
        }
        if (static_cast<int>(shot_list.size()) != ways) {
            throw ConfigError("shot_list length must equal ways");
        }
        for (int s : shot_list) {
            if (s < 1) throw ConfigError("shot_list entries must be >= 1");
        }
    } else if (shots < 1) {
        throw ConfigError("shots must be >= 1");
    }
}

namespace {

std::string trim(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        values.push_back(std::stoi(trim(item)));
    }
    return values;
}

}  // namespace

ProtocolConfig parse_protocol_config(std::istream& in) {
    ProtocolConfig config;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("protocol config line " + std::to_string(line_number) +
                              ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            if (key == "base_classes") config.base_classes = std::stoi(value);
            else if (key == "tasks") config.tasks = std::stoi(value);
            else if (key == "ways") config.ways = std::stoi(value);
            else if (key == "shots") config.shots = std::stoi(value);
            else if (key == "shot_list") config.shot_list = parse_int_list(value);
            else if (key == "variant") config.variant = parse_variant(value);
            else if (key == "seed") config.seed = std::stoull(value);
            else if (key == "train_per_class") config.train_per_class = std::stoi(value);
            else if (key == "lb_base_classes") config.lb_base_classes = std::stoi(value);
            else throw ConfigError("unknown protocol config key \"" + key + "\"");
        } catch (const std::invalid_argument&) {
            throw ConfigError("protocol config line " + std::to_string(line_number) +
                              ": bad value for " + key);
        }
    }
    return config;
}

ProtocolConfig parse_protocol_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open protocol config " + path);
    }
    return parse_protocol_config(in);
}

void write_protocol_config(const ProtocolConfig& config, std::ostream& out) {
    out << "base_classes = " << config.base_classes << "\n";
    out << "tasks = " << config.tasks << "\n";
    out << "ways = " << config.ways << "\n";
    out << "shots = " << config.shots << "\n";
    if (!config.shot_list.empty()) {
        out << "shot_list = ";
        for (std::size_t i = 0; i < config.shot_list.size(); ++i) {
            out << (i ? "," : "") << config.shot_list[i];
        }
        out << "\n";
    }
    out << "variant = " << to_string(config.variant) << "\n";
    out << "seed = " << config.seed << "\n";
    if (config.train_per_class >= 0) out << "train_per_class = " << config.train_per_class << "\n";
    if (config.lb_base_classes >= 0) out << "lb_base_classes = " << config.lb_base_classes << "\n";
}

int SessionPlan::total_classes() const {
    int count = 0;
    for (const TaskSpec& task : tasks) {
        count += static_cast<int>(task.class_ids.size());
    }
    return count;
}

std::vector<int> SessionPlan::classes_up_to(int upto_task) const {
    std::vector<int> classes;
    for (int t = 0; t <= upto_task && t < session_count(); ++t) {
        classes.insert(classes.end(), tasks[t].class_ids.begin(), tasks[t].class_ids.end());
    }
    std::sort(classes.begin(), classes.end());
    return classes;
}

SessionPlan build_sessions(const ProtocolConfig& config, int available_classes) {
    config.validate();

    int base = config.base_classes;
    if (config.variant == Variant::fewer_base) {
        base = config.lb_base_classes > 0
                   ? config.lb_base_classes
                   : std::max(1, (available_classes * 2) / 5);  // 40% of the budget
    }
    const int needed = base + config.tasks * config.ways;
    if (needed > available_classes) {
        throw InsufficientClassesError("plan needs " + std::to_string(needed) +
                                       " classes but only " + std::to_string(available_classes) +
                                       " are available");
    }

    SessionPlan plan;
    plan.variant = config.variant;
    plan.seed = config.seed;
    plan.train_per_class = config.train_per_class;

    TaskSpec base_task;
    base_task.class_ids.resize(base);
    std::iota(base_task.class_ids.begin(), base_task.class_ids.end(), 0);
    base_task.shots.assign(base, kAllShots);
    plan.tasks.push_back(std::move(base_task));

    int next_class = base;
    for (int t = 0; t < config.tasks; ++t) {
        TaskSpec task;
        task.class_ids.resize(config.ways);
        std::iota(task.class_ids.begin(), task.class_ids.end(), next_class);
        next_class += config.ways;
        if (config.variant == Variant::imbalanced) {
            task.shots = config.shot_list;
        } else {
            task.shots.assign(config.ways, config.shots);
        }
        plan.tasks.push_back(std::move(task));
    }
    return plan;
}

std::vector<int> class_train_pool(const Dataset& dataset, int class_id, int train_per_class) {
    if (class_id < 0 || class_id >= static_cast<int>(dataset.samples_by_class.size())) {
        throw UnknownClassError("class " + std::to_string(class_id) + " not in dataset");
    }
    const std::vector<int>& block = dataset.samples_by_class[class_id];
    if (train_per_class < 0 || train_per_class > static_cast<int>(block.size())) {
        throw ConfigError("train_per_class " + std::to_string(train_per_class) +
                          " exceeds the " + std::to_string(block.size()) +
                          " samples of class " + std::to_string(class_id));
    }
    return {block.begin(), block.begin() + train_per_class};
}

std::vector<int> class_test_pool(const Dataset& dataset, int class_id, int train_per_class) {
    const std::vector<int>& block = dataset.samples_by_class.at(class_id);
    if (train_per_class < 0 || train_per_class > static_cast<int>(block.size())) {
        throw ConfigError("train_per_class out of range for class " + std::to_string(class_id));
    }
    return {block.begin() + train_per_class, block.end()};
}

namespace {

std::uint64_t shot_draw_seed(std::uint64_t plan_seed, int task, int class_id) {
    std::uint64_t words[3] = {plan_seed, static_cast<std::uint64_t>(task),
                              static_cast<std::uint64_t>(class_id)};
    return fnv1a64(words, sizeof(words));
}

}  // namespace

std::vector<int> session_train_indices(const Dataset& dataset, const SessionPlan& plan, int task) {
    const TaskSpec& spec = plan.tasks.at(task);
    std::vector<int> indices;
    for (std::size_t k = 0; k < spec.class_ids.size(); ++k) {
        const int class_id = spec.class_ids[k];
        std::vector<int> pool = class_train_pool(dataset, class_id, plan.train_per_class);
        const int shots = spec.shots[k];
        if (shots == kAllShots) {
            indices.insert(indices.end(), pool.begin(), pool.end());
            continue;
        }
        if (shots > static_cast<int>(pool.size())) {
            throw ConfigError("class " + std::to_string(class_id) + " train pool has " +
                              std::to_string(pool.size()) + " samples, need " +
                              std::to_string(shots) + " shots");
        }
        Rng draw(shot_draw_seed(plan.seed, task, class_id));
        shuffle(pool, draw);
        indices.insert(indices.end(), pool.begin(), pool.begin() + shots);
    }
    return indices;
}

std::vector<int> task_test_indices(const Dataset& dataset, const SessionPlan& plan, int task) {
    std::vector<int> indices;
    for (int class_id : plan.tasks.at(task).class_ids) {
        const std::vector<int> pool = class_test_pool(dataset, class_id, plan.train_per_class);
        indices.insert(indices.end(), pool.begin(), pool.end());
    }
    return indices;
}

}  // namespace s3c
