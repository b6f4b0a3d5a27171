use poisim::geodata::{CheckinSequence, RegionMap};
use poisim::recsys::{init_model, train_local, InitSpec, TrainConfig};
use poisim::ptia::detect_regions;

fn walks(favs: &[usize], n: usize, len: usize, off: usize) -> Vec<CheckinSequence> {
    (0..n).map(|i| CheckinSequence::new(Some(0), (0..len).map(|j| favs[(off + i + 2*j) % favs.len()]).collect()).unwrap()).collect()
}

fn main() {
    let map = RegionMap { k: 5, assignment: (0..300).map(|p| p / 60).collect(), centroids: vec![(0.0,0.0);5] };
    for (major, minor) in [(9, 5), (8, 4), (10, 6)] {
        for lr in [0.2, 0.3, 0.5] {
            let init = InitSpec::new(3);
            let params = init_model(300, 8, &init).unwrap();
            let favs1: Vec<usize> = (0..12).map(|i| 60 + 5 * i).collect();
            let favs3: Vec<usize> = (0..12).map(|i| 180 + 5 * i).collect();
            let mut data = walks(&favs1, major, 30, 0);
            data.extend(walks(&favs3, minor, 30, 1));
            let cfg = TrainConfig { learning_rate: lr, max_epochs: 60, dropout: 0.0, ..TrainConfig::default() };
            let trained = train_local(&params, &data, &cfg, 4).unwrap();
            let det = detect_regions(&trained, &init, &map).unwrap();
            let s: Vec<String> = det.scores.iter().map(|x| format!("{:.4}", x.divergence)).collect();
            println!("major {major} minor {minor} lr {lr}: {:?} visited {:?}", s, det.visited);
        }
    }
}
