//! DER scoring of RTTM files: collars around reference boundaries, optimal
//! speaker mapping, interval-exact error times.
//!
//! ```bash
//! cargo run --example score_rttm
//! ```

use vbdiar::der::{self, Turn, TurnList};

fn main() -> vbdiar::Result<()> {
    // reference: A talks for 5 s, then B for 5 s
    let reference = TurnList::new(
        "demo",
        vec![Turn::new(0.0, 5.0, "alice"), Turn::new(5.0, 10.0, "bob")],
    )?;
    // hypothesis: the change point is detected one second late, and the
    // system invented its own speaker names
    let hypothesis = TurnList::new(
        "demo",
        vec![Turn::new(0.0, 6.0, "sys0"), Turn::new(6.0, 10.0, "sys1")],
    )?;

    let mapping = der::map_speakers(&reference, &hypothesis)?;
    println!("optimal speaker mapping: {mapping:?}");

    for collar in [0.0, 0.25] {
        let report = der::compute_der(&reference, &hypothesis, collar)?;
        println!(
            "collar {collar:.2}: scored {:.2} s, miss {:.2} s, fa {:.2} s, \
             speaker error {:.2} s, DER {:.2}%",
            report.scored_time,
            report.miss_time,
            report.false_alarm_time,
            report.speaker_error_time,
            100.0 * report.der
        );
    }

    // round-trip through the RTTM layout
    let dir = std::env::temp_dir().join("vbdiar-example-rttm");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("demo.rttm");
    der::write_rttm(&path, &hypothesis)?;
    println!("\n{}:", path.display());
    print!("{}", std::fs::read_to_string(&path)?);
    let back = der::read_rttm(&path)?;
    assert_eq!(back.turns().len(), hypothesis.turns().len());
    Ok(())
}
