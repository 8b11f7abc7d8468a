"""Writes ablation_attention.json: a five-sentence document whose attention
rows for the last sentence are engineered so that MAX and AVG aggregation
rank the earlier sentences differently. The expected windows are computed
here by brute force and stored next to the tensor."""
import json

SENTENCES = ["Aa bb cc.", "Dd ee ff.", "Gg hh ii.", "Jj kk ll.", "Mm nn oo."]
TEXT = " ".join(SENTENCES)
HEADS = 2
N_CONTEXT = 3
CURRENT = 4

# Attention paid by each token of the current sentence to the three tokens of
# sentences 0..3. Sentence 0 has one strong token (high max, low mean);
# sentence 3 is flat (lower max, higher mean than sentence 0).
TOWARD = {
    0: [0.20, 0.005, 0.005],
    1: [0.08, 0.08, 0.08],
    2: [0.09, 0.07, 0.07],
    3: [0.075, 0.075, 0.075],
}


def tokens():
    out = [{"text": "<s>", "start": 0, "end": 0}]
    pos = 0
    for sentence in SENTENCES:
        for word in sentence.split(" "):
            start = TEXT.index(word, pos)
            out.append({"text": word, "start": start, "end": start + len(word)})
            pos = start + len(word)
    return out


def sentence_of(token_index):
    return None if token_index == 0 else (token_index - 1) // 3


def head_avg_rows(n):
    rows = []
    for i in range(n):
        row = [0.0] * n
        s = sentence_of(i)
        if s != CURRENT:
            for j in range(i + 1):
                row[j] = 1.0 / (i + 1)
        else:
            rest = 1.0
            for target, weights in TOWARD.items():
                for t, w in enumerate(weights):
                    row[1 + 3 * target + t] = w
                    rest -= w
            row[0] = 0.05
            rest -= 0.05
            own = [j for j in range(1 + 3 * CURRENT, i + 1)]
            for j in own:
                row[j] = rest / len(own)
        rows.append(row)
    return rows


def split_heads(avg):
    # Head 0 shifts 0.02 from the first token of sentence 1 to BOS; head 1
    # does the opposite, so the head average is unchanged.
    heads = [[r[:] for r in avg] for _ in range(HEADS)]
    shift_col = 1 + 3 * 1
    for i, row in enumerate(avg):
        if sentence_of(i) == CURRENT:
            heads[0][i][0] += 0.02
            heads[0][i][shift_col] -= 0.02
            heads[1][i][0] -= 0.02
            heads[1][i][shift_col] += 0.02
    return heads


def scores(avg, mode):
    n = len(avg)
    cur_tokens = [i for i in range(n) if sentence_of(i) == CURRENT]
    out = {}
    for s in range(CURRENT):
        per_token = []
        for i in cur_tokens:
            vals = [avg[i][k] for k in range(n) if sentence_of(k) == s and k <= i]
            if vals:
                per_token.append(max(vals) if mode == "max" else sum(vals) / len(vals))
        out[s] = sum(per_token) / len(per_token)
    return out


def top_n(score_row, n):
    ranked = sorted(score_row, key=lambda s: (-score_row[s], s))[:n]
    return sorted(ranked)


def main():
    toks = tokens()
    avg = head_avg_rows(len(toks))
    heads = split_heads(avg)
    max_scores = scores(avg, "max")
    avg_scores = scores(avg, "avg")
    expected = {
        "max": top_n(max_scores, N_CONTEXT),
        "avg": top_n(avg_scores, N_CONTEXT),
        "fixed": [s for s in range(CURRENT - 2, CURRENT + 3) if 0 <= s < len(SENTENCES) and s != CURRENT],
    }
    assert expected["max"] != expected["avg"]
    assert expected["max"] != expected["fixed"]
    fixture = {
        "text": TEXT,
        "sentences": SENTENCES,
        "current": CURRENT,
        "n_context": N_CONTEXT,
        "response": {"tokens": toks, "num_heads": HEADS, "causal": True, "weights": heads},
        "scores": {"max": [max_scores[s] for s in range(CURRENT)], "avg": [avg_scores[s] for s in range(CURRENT)]},
        "expected": expected,
    }
    with open("ablation_attention.json", "w") as f:
        json.dump(fixture, f, indent=1)
        f.write("\n")
    print(json.dumps(expected))


if __name__ == "__main__":
    main()
