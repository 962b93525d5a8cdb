"""Regenerate resources/toy_corpus.json from the sentence tables below.

Each answer is written as (sentence, label) pairs; gold span offsets are
computed from the joined text, so they never drift out of sync with it.
Consecutive sentences with the same label become one span.
"""
import json
from pathlib import Path

E, I, C, S, Q = "EXPERIENCE", "INFORMATION", "CAUSE", "SUGGESTION", "QUESTION"

THREADS = [
    ("t01", "What is the best way to get rid of a tension headache?",
     "I get headaches most afternoons at work.",
     [
         [("I had tension headaches for years when I worked night shifts.", E),
          ("You should try drinking more water during the day.", S),
          ("Take short breaks from the screen every hour.", S)],
         [("Tension headaches are usually caused by stress and poor posture.", C),
          ("They typically last from 30 minutes to several hours.", I)],
         [("Have you had your eyes checked recently?", Q),
          ("I recommend seeing an optometrist.", S)],
     ],
     {E: "One person had tension headaches for years while working night shifts.",
      S: "Drink more water, take screen breaks, and get your eyes checked.",
      C: "Stress and poor posture cause tension headaches.",
      I: "Tension headaches typically last from 30 minutes to several hours.",
      Q: "Has the asker had their eyes checked recently?"}),
    ("t02", "Why do my knees hurt after running?", "",
     [
         [("Knee pain after running is often due to weak hip muscles.", C),
          ("Worn out shoes can also lead to knee strain.", C)],
         [("My knees hurt every time I ran on pavement.", E),
          ("Switching to trail running helped me a lot.", E)],
         [("You should see a physiotherapist for a gait analysis.", S)],
     ],
     {C: "Weak hip muscles and worn out shoes lead to knee pain.",
      E: "Switching from pavement to trails helped one runner.",
      S: "See a physiotherapist for a gait analysis."}),
    ("t03", "Is it safe to take ibuprofen every day?", "I have chronic back pain.",
     [
         [("Daily ibuprofen is associated with stomach ulcers and kidney problems.", C),
          ("The usual maximum dose for adults is 1200 mg per day without a prescription.", I)],
         [("Ask your doctor about safer long term options.", S)],
         [("My mother took it daily and developed an ulcer.", E),
          ("Does your back pain get worse at night?", Q)],
     ],
     {C: "Daily ibuprofen is linked to ulcers and kidney problems.",
      I: "The usual over the counter maximum is 1200 mg per day.",
      S: "Ask a doctor about safer long term options.",
      E: "One mother developed an ulcer from daily use.",
      Q: "Does the back pain get worse at night?"}),
    ("t04", "How can I fall asleep faster?", "",
     [
         [("Avoid caffeine after lunch.", S),
          ("Keep your bedroom cool and dark.", S)],
         [("Most adults generally need 7 to 9 hours of sleep.", I)],
         [("When I stopped using my phone in bed, I slept much better.", E)],
         [("Anxiety is a common reason people lie awake at night.", C)],
     ],
     {S: "Avoid caffeine after lunch and keep the bedroom cool and dark.",
      I: "Most adults need 7 to 9 hours of sleep.",
      E: "Putting the phone away in bed improved one person's sleep.",
      C: "Anxiety often keeps people awake at night."}),
    ("t05", "What causes frequent nosebleeds in children?", "My son gets them every week.",
     [
         [("Dry air is the most common cause of nosebleeds in kids.", C),
          ("Nose picking also triggers them.", C)],
         [("Use a humidifier in the bedroom at night.", S)],
         [("My daughter had the same problem every winter.", E),
          ("Did your doctor check for allergies?", Q)],
     ],
     {C: "Dry air and nose picking cause most nosebleeds in children.",
      S: "Use a humidifier in the bedroom.",
      E: "One daughter had nosebleeds every winter.",
      Q: "Has a doctor checked for allergies?"}),
    ("t06", "Should I be worried about a mole that changed color?", "",
     [
         [("See a dermatologist as soon as possible.", S)],
         [("Changes in color or shape are warning signs of melanoma.", I),
          ("Melanoma is a type of skin cancer.", I)],
         [("I had a mole removed last year after it darkened.", E),
          ("It turned out to be benign.", E)],
     ],
     {S: "See a dermatologist as soon as possible.",
      I: "Color or shape changes are warning signs of melanoma, a skin cancer.",
      E: "One person had a darkened mole removed and it was benign."}),
    ("t07", "How do I lower my blood pressure naturally?", "My last reading was 145 over 95.",
     [
         [("Cut down on salt and processed food.", S),
          ("Try walking 30 minutes a day.", S)],
         [("High sodium intake leads to fluid retention and higher pressure.", C)],
         [("I lowered mine by 15 points after I gave up smoking.", E)],
         [("Are you already taking any medication?", Q)],
     ],
     {S: "Cut down on salt and walk 30 minutes a day.",
      C: "High sodium intake raises blood pressure.",
      E: "Quitting smoking lowered one person's blood pressure by 15 points.",
      Q: "Is the asker already taking medication?"}),
    ("t08", "What helps with heartburn during pregnancy?", "",
     [
         [("Eat smaller meals and do not lie down right after eating.", S)],
         [("Pregnancy hormones relax the valve between the stomach and esophagus.", C),
          ("That is why acid comes back up.", C)],
         [("I had terrible heartburn with my second child.", E),
          ("Sleeping propped up on pillows helped me.", E)],
     ],
     {S: "Eat smaller meals and stay upright after eating.",
      C: "Pregnancy hormones relax the valve that keeps acid down.",
      E: "Sleeping propped up on pillows helped one mother."}),
    ("t09", "Can stress cause hair loss?", "I am losing more hair than usual.",
     [
         [("Severe stress can trigger a condition called telogen effluvium.", C),
          ("Telogen effluvium is a form of temporary hair shedding.", I)],
         [("My hair thinned a lot after my father died.", E),
          ("It grew back within a year.", E)],
         [("Has anyone tried biotin supplements for this?", Q)],
     ],
     {C: "Severe stress can trigger temporary hair shedding.",
      I: "Telogen effluvium is a form of temporary hair shedding.",
      E: "One person's hair thinned after a bereavement and grew back within a year.",
      Q: "Has anyone tried biotin supplements?"}),
    ("t10", "How long does a cold usually last?", "",
     [
         [("A common cold typically lasts 7 to 10 days.", I)],
         [("Rest and drink plenty of fluids.", S),
          ("See a doctor if the fever lasts more than three days.", S)],
         [("Colds are caused by viruses, so antibiotics do not help.", C)],
         [("Mine always lasts about two weeks.", E),
          ("Is that normal?", Q)],
     ],
     {I: "A common cold typically lasts 7 to 10 days.",
      S: "Rest, drink fluids, and see a doctor for a lasting fever.",
      C: "Colds are viral, so antibiotics do not help.",
      E: "One person's colds last about two weeks.",
      Q: "Is a two week cold normal?"}),
]


def build_thread(tid, question, context, answers, summaries):
    out_answers, spans = [], []
    for k, sentences in enumerate(answers, start=1):
        aid = f"{tid}-a{k}"
        text = " ".join(s for s, _ in sentences)
        out_answers.append({"id": aid, "text": text})
        pos = 0
        for sentence, label in sentences:
            start = text.index(sentence, pos)
            end = start + len(sentence)
            pos = end
            if spans and spans[-1]["answer_id"] == aid and spans[-1]["label"] == label:
                spans[-1]["end"] = end
            else:
                spans.append({"answer_id": aid, "start": start, "end": end, "label": label})
    for s in spans:
        text = next(a["text"] for a in out_answers if a["id"] == s["answer_id"])
        s["text"] = text[s["start"]:s["end"]]
    return {"id": tid, "question": question, "context": context, "answers": out_answers,
            "gold": {"spans": spans, "summaries": summaries}}


def main():
    target = Path(__file__).resolve().parents[1] / "src" / "cqa_perspectives" / "resources" / "toy_corpus.json"
    corpus = [build_thread(*t) for t in THREADS]
    target.write_text(json.dumps(corpus, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus)} threads to {target}")


if __name__ == "__main__":
    main()
