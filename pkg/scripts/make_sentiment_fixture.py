"""Regenerate tests/fixtures/sentiment_reference.json.

Runs the reference ``vaderSentiment`` package (not a runtime dependency;
``pip install vaderSentiment``) over a fixed corpus and freezes its outputs.
"""
import json
import pathlib

from vaderSentiment.vaderSentiment import SentimentIntensityAnalyzer

CORPUS = [
    "Tesla stock is great today",
    "GOOD stock!!",
    "This earnings report is terrible.",
    "The rally is not good for short sellers",
    "I am very happy with my gains",
    "The stock closed at 898 dollars",
    "Horrible guidance, investors are angry and worried",
    "What an AMAZING quarter for the company!",
    "Shares are slightly up after the announcement",
    "I don't like the new CEO at all",
    "Extremely bullish, this is the best trade of the year!!!",
    "The market crash destroyed my portfolio",
    "Nice profit :) happy weekend",
    "Is this a bubble??",
    "Not bad for a Monday",
    "Investors feel hopeful and confident about growth",
    "Losses keep piling up, awful week",
    "The company delayed the product launch again",
    "Really disappointed, sold everything at a loss",
    "Strong demand and record deliveries make me optimistic",
]


def main():
    analyzer = SentimentIntensityAnalyzer()
    rows = [{"text": t, **analyzer.polarity_scores(t)} for t in CORPUS]
    out = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "sentiment_reference.json"
    out.write_text(json.dumps(rows, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    for r in rows:
        print(f"{r['compound']:+.4f}  {r['text']}")


if __name__ == "__main__":
    main()
