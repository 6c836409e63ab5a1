use std::collections::HashSet;

use bondlab::calendar::TradingCalendar;
use bondlab::news::{chronological_split, clean_corpus, Partition, RawArticle, SplitBoundaries};
use chrono::NaiveDate;

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn main() {
    let calendar = TradingCalendar::weekdays(date("2021-12-01"), date("2022-03-31"));
    let body = "<p>Gilt yields fell after the auction drew strong demand.</p> ".repeat(12);
    let raw = vec![
        RawArticle {
            title: "Gilts rally".into(),
            date: "2021-12-18T09:00:00Z".into(),
            topic: "economy".into(),
            text: body.clone(),
        },
        RawArticle {
            title: "  GILTS RALLY ".into(),
            date: "2021-12-20".into(),
            topic: "economy".into(),
            text: body.clone(),
        },
        RawArticle {
            title: "Budget preview".into(),
            date: "2022-02-01 07:30:00".into(),
            topic: "politics".into(),
            text: "too short".into(),
        },
        RawArticle {
            title: "Football results".into(),
            date: "2022-02-02".into(),
            topic: "sport".into(),
            text: body.clone(),
        },
        RawArticle {
            title: "Inflation surprise".into(),
            date: "2022-01-04".into(),
            topic: "economy".into(),
            text: body,
        },
    ];
    let blocklist: HashSet<String> = ["sport".to_string()].into();
    let (articles, report) = clean_corpus(raw, &blocklist, &calendar);
    print!("{}", report.to_csv());
    for a in &articles {
        println!(
            "{} {} published {} trades {}",
            a.article_id, a.title, a.published, a.aligned_date
        );
    }

    let boundaries =
        SplitBoundaries::new(date("2021-12-15"), date("2022-01-01"), date("2022-01-15")).unwrap();
    let split = chronological_split(&articles, boundaries);
    for p in [
        Partition::Train,
        Partition::Validation,
        Partition::Test,
        Partition::Evaluation,
    ] {
        println!("{p:?}: {}", split.get(p).len());
    }
}
