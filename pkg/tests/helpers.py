"""Independent brute-force oracles shared by the module and acceptance tests.

These deliberately re-derive gram statistics and backoff behavior with a
different traversal than the library (per-order window scans instead of
per-position order loops) so they can serve as a second opinion.
"""

from collections import Counter


def naive_gram_counts(sequences, max_order):
    """counts[k][ctx][next] by direct window enumeration per order."""
    counts = {k: {} for k in range(1, max_order + 1)}
    for actions in sequences:
        n = len(actions)
        for order in range(1, max_order + 1):
            if order == 1:
                slots = [((), actions[t]) for t in range(1, n)]
            else:
                slots = [
                    (tuple(actions[i : i + order - 1]), actions[i + order - 1])
                    for i in range(0, n - order + 1)
                ]
            for ctx, nxt in slots:
                counts[order].setdefault(ctx, Counter())[nxt] += 1
    return counts


def naive_backoff_predict(counts, context, max_order):
    """(predicted, order_used) from the naive counts: largest order with
    observations, argmax by count then lowest id."""
    start = min(max_order, len(context) + 1)
    for order in range(start, 0, -1):
        ctx = tuple(context[len(context) - order + 1 :]) if order > 1 else ()
        table = counts[order].get(ctx)
        if table:
            predicted = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
            return predicted, order
    raise ValueError("no observations at any order")


def naive_backoff_usage(counts, sequences, max_order):
    """Order-usage fractions recomputed from the naive counts."""
    used = Counter()
    total = 0
    for actions in sequences:
        for t in range(1, len(actions)):
            _, order = naive_backoff_predict(counts, actions[:t], max_order)
            used[order] += 1
            total += 1
    return {order: used.get(order, 0) / total for order in range(1, max_order + 1)}
