use rand::Rng;

use super::scenario::Mobility;

/// Random-waypoint walker: pick a point and a speed, walk there in a
/// straight line, pause, repeat.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Walker {
    pub pos: (f64, f64),
    target: (f64, f64),
    speed: f64,
    pause_left: f64,
}

impl Walker {
    pub fn stationary(pos: (f64, f64)) -> Self {
        Self {
            pos,
            target: pos,
            speed: 0.0,
            pause_left: f64::INFINITY,
        }
    }

    pub fn new<R: Rng + ?Sized>(pos: (f64, f64), mobility: &Mobility, world: (f64, f64), rng: &mut R) -> Self {
        let mut w = Self::stationary(pos);
        if let Mobility::RandomWaypoint { .. } = mobility {
            w.pause_left = 0.0;
            w.pick_leg(mobility, world, rng);
        }
        w
    }

    fn pick_leg<R: Rng + ?Sized>(&mut self, mobility: &Mobility, world: (f64, f64), rng: &mut R) {
        if let Mobility::RandomWaypoint { speed_min, speed_max, .. } = *mobility {
            self.target = (rng.random_range(0.0..=world.0), rng.random_range(0.0..=world.1));
            self.speed = rng.random_range(speed_min..=speed_max);
        }
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, dt: f64, mobility: &Mobility, world: (f64, f64), rng: &mut R) {
        let Mobility::RandomWaypoint { pause_min_s, pause_max_s, .. } = *mobility else {
            return;
        };
        let mut left = dt;
        while left > 0.0 {
            if self.pause_left > 0.0 {
                let used = self.pause_left.min(left);
                self.pause_left -= used;
                left -= used;
                if self.pause_left <= 0.0 {
                    self.pick_leg(mobility, world, rng);
                }
                continue;
            }
            let (dx, dy) = (self.target.0 - self.pos.0, self.target.1 - self.pos.1);
            let dist = dx.hypot(dy);
            let reach = self.speed * left;
            if reach < dist {
                self.pos.0 += dx / dist * reach;
                self.pos.1 += dy / dist * reach;
                left = 0.0;
            } else {
                self.pos = self.target;
                left -= if self.speed > 0.0 { dist / self.speed } else { left };
                self.pause_left = rng.random_range(pause_min_s..=pause_max_s);
                if self.pause_left <= 0.0 {
                    self.pick_leg(mobility, world, rng);
                }
            }
        }
        self.pos.0 = self.pos.0.clamp(0.0, world.0);
        self.pos.1 = self.pos.1.clamp(0.0, world.1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const RWP: Mobility = Mobility::RandomWaypoint {
        speed_min: 0.5,
        speed_max: 2.0,
        pause_min_s: 0.0,
        pause_max_s: 30.0,
    };

    #[test]
    fn static_agents_never_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = Walker::new((3.0, 4.0), &Mobility::Static, (10.0, 10.0), &mut rng);
        for _ in 0..100 {
            w.advance(1.0, &Mobility::Static, (10.0, 10.0), &mut rng);
        }
        assert_eq!(w.pos, (3.0, 4.0));
    }

    proptest! {
        #[test]
        fn walkers_stay_in_bounds_and_respect_speed(seed in any::<u64>(), steps in 1usize..400) {
            let world = (50.0, 20.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = Walker::new((25.0, 10.0), &RWP, world, &mut rng);
            for _ in 0..steps {
                let before = w.pos;
                w.advance(1.0, &RWP, world, &mut rng);
                prop_assert!((0.0..=world.0).contains(&w.pos.0) && (0.0..=world.1).contains(&w.pos.1));
                let moved = (w.pos.0 - before.0).hypot(w.pos.1 - before.1);
                prop_assert!(moved <= 2.0 + 1e-9);
            }
        }
    }
}
