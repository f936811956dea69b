use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Command, Stdio};

use ortrack::keyframes::{frame_diff, select_keyframes, DiffSignal, KeyframeParams};

use crate::{CliError, KeyframesArgs};

// decoded video is downscaled before differencing
const VIDEO_W: usize = 64;
const VIDEO_H: usize = 32;

fn read_signal(path: &Path) -> Result<DiffSignal, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| CliError::Input(format!("{}: bad value {t:?} ({e})", path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DiffSignal::new(values)?)
}

fn read_gray(path: &Path) -> Result<DiffSignal, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Vec<f64> = serde_json::from_str(&line)
            .map_err(|e| CliError::Input(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        frames.push(frame);
    }
    Ok(frame_diff(&frames)?)
}

fn read_video(path: &Path) -> Result<DiffSignal, CliError> {
    let mut child = Command::new("ffmpeg")
        .args(["-v", "error", "-i"])
        .arg(path)
        .args([
            "-vf",
            &format!("scale={VIDEO_W}:{VIDEO_H},format=gray"),
            "-f",
            "rawvideo",
            "-",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| CliError::Input(format!("cannot run ffmpeg: {e}")))?;
    let mut raw = Vec::new();
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_end(&mut raw)
        .map_err(|e| CliError::Input(format!("reading ffmpeg output: {e}")))?;
    let status = child
        .wait()
        .map_err(|e| CliError::Input(format!("ffmpeg: {e}")))?;
    if !status.success() {
        return Err(CliError::Input(format!(
            "ffmpeg failed on {}: {status}",
            path.display()
        )));
    }
    let frames: Vec<Vec<f64>> = raw
        .chunks_exact(VIDEO_W * VIDEO_H)
        .map(|c| c.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    Ok(frame_diff(&frames)?)
}

/// Prints one index per line. Index `t` refers to the change between frames
/// `t` and `t + 1` of the input.
pub fn run(args: KeyframesArgs) -> Result<(), CliError> {
    let signal = if let Some(p) = &args.signal {
        read_signal(p)?
    } else if let Some(p) = &args.gray {
        read_gray(p)?
    } else if let Some(p) = &args.video {
        read_video(p)?
    } else {
        return Err(CliError::Usage(
            "one of --signal, --gray, --video is required".into(),
        ));
    };
    let params = KeyframeParams {
        smooth_w: args.smooth_w,
        k: args.k,
        d_min: args.d_min,
    };
    for i in select_keyframes(&signal, &params)? {
        println!("{i}");
    }
    Ok(())
}
