#pragma once

#include <concepts>
#include <span>
#include <string>
#include <vector>

namespace dlmp {

// Requirements on a prosumer utility: concave, strictly increasing,
// differentiable on x >= 0, with an invertible marginal giving the demand at a
// unit price.
template <class U>
concept ConcaveUtility = requires(const U& u, double x, double c) {
    { u.value(x) } -> std::convertible_to<double>;
    { u.marginal(x) } -> std::convertible_to<double>;
    { u.consumption(c) } -> std::convertible_to<double>;
};

// u(x) = a log(b x + 1)
struct LogUtility {
    double a = 1.0;
    double b = 1.0;

    double value(double x) const;
    double marginal(double x) const;
    // argmax_{x >= 0} u(x) - c x
    double consumption(double c) const;
};

static_assert(ConcaveUtility<LogUtility>);

struct Prosumer {
    double a = 1.0;
    double b = 1.0;
    double g = 0.0; // PV generation
};

double utility(const Prosumer& pr, double x);
double payoff(const Prosumer& pr, double p, double c);
// Net demand p = x - g maximizing the payoff at unit cost c.
double best_response(const Prosumer& pr, double c);

template <ConcaveUtility U>
double best_response(const U& u, double g, double c)
{
    return u.consumption(c) - g;
}

struct AggregateResponse {
    double demand = 0.0;  // p_k
    double welfare = 0.0; // W_k
};

// Node-level aggregator. Prosumer parameters stay inside; callers see the
// price-to-demand map and the resulting welfare.
class Aggregator {
public:
    Aggregator(std::string label, int node, std::vector<Prosumer> prosumers);

    const std::string& label() const { return label_; }
    int node() const { return node_; }
    std::size_t size() const { return a_.size(); }

    double demand(double c) const;
    AggregateResponse respond(double c) const;

    // Lowest reachable demand, -sum g.
    double min_demand() const { return -g_sum_; }

    // Full-information view used by the reference oracle and scenario files.
    double inverse_demand(double p) const;
    double welfare_at_demand(double p) const;
    std::vector<Prosumer> prosumers() const;

private:
    std::string label_;
    int node_;
    std::vector<double> a_, b_, g_, ab_;
    double g_sum_ = 0.0;
};

AggregateResponse aggregate_response(const Aggregator& agg, double c);

} // namespace dlmp
