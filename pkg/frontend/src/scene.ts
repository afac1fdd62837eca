/**
 * three.js scene wrapper: surface mesh colored by feature, preview
 * overlay applied to positions, joint spheres and bone segments, and a
 * ray pick against joints for dragging. All numbers rendered come from
 * bridge messages via ViewState.
 */

import * as THREE from "three";

import type { ViewState } from "./state.js";

const JOINT_RADIUS = 0.035;

export class SteerScene {
  scene = new THREE.Scene();
  camera: THREE.PerspectiveCamera;
  renderer: THREE.WebGLRenderer;
  private surfaceMesh: THREE.Mesh | null = null;
  private jointGroup = new THREE.Group();
  private boneLines: THREE.LineSegments | null = null;
  private raycaster = new THREE.Raycaster();

  constructor(
    private state: ViewState,
    canvas: HTMLCanvasElement,
  ) {
    this.camera = new THREE.PerspectiveCamera(
      50,
      canvas.clientWidth / Math.max(1, canvas.clientHeight),
      0.01,
      100,
    );
    this.camera.position.set(1.5, 1.2, 1.8);
    this.camera.lookAt(0, 0, 0);
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.scene.background = new THREE.Color(0x10141a);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 0.9);
    key.position.set(2, 3, 2);
    this.scene.add(key);
    this.scene.add(this.jointGroup);
  }

  rebuildSurface(): void {
    if (this.surfaceMesh) {
      this.scene.remove(this.surfaceMesh);
      this.surfaceMesh.geometry.dispose();
    }
    const buffers = this.state.buildBuffers();
    const geom = new THREE.BufferGeometry();
    geom.setAttribute("position", new THREE.BufferAttribute(buffers.positions, 3));
    geom.setAttribute("color", new THREE.BufferAttribute(buffers.colors, 3));
    geom.setIndex(new THREE.BufferAttribute(buffers.indices, 1));
    geom.computeVertexNormals();
    const mat = new THREE.MeshLambertMaterial({
      vertexColors: true,
      side: THREE.DoubleSide,
    });
    this.surfaceMesh = new THREE.Mesh(geom, mat);
    this.scene.add(this.surfaceMesh);
  }

  rebuildSkeleton(): void {
    this.jointGroup.clear();
    if (this.boneLines) {
      this.scene.remove(this.boneLines);
      this.boneLines.geometry.dispose();
      this.boneLines = null;
    }
    const skel = this.state.skeleton;
    if (!skel) return;
    const sphere = new THREE.SphereGeometry(JOINT_RADIUS, 12, 10);
    const njoints = skel.joints.length / 3;
    for (let j = 0; j < njoints; j++) {
      const mat = new THREE.MeshLambertMaterial({
        color: this.state.selectedJoint === j ? 0xffcc33 : 0x44aaff,
      });
      const ball = new THREE.Mesh(sphere, mat);
      ball.position.set(
        skel.joints[3 * j],
        skel.joints[3 * j + 1],
        skel.joints[3 * j + 2],
      );
      ball.userData.joint = j;
      this.jointGroup.add(ball);
    }
    const segs = new Float32Array(skel.bones.length * 3);
    for (let i = 0; i < skel.bones.length; i++) {
      const j = skel.bones[i];
      segs[3 * i] = skel.joints[3 * j];
      segs[3 * i + 1] = skel.joints[3 * j + 1];
      segs[3 * i + 2] = skel.joints[3 * j + 2];
    }
    const geom = new THREE.BufferGeometry();
    geom.setAttribute("position", new THREE.BufferAttribute(segs, 3));
    this.boneLines = new THREE.LineSegments(
      geom,
      new THREE.LineBasicMaterial({ color: 0xdddddd }),
    );
    this.scene.add(this.boneLines);
  }

  /** Joint index under the pointer, or null when empty space is clicked. */
  pickJoint(ndcX: number, ndcY: number): number | null {
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const hits = this.raycaster.intersectObjects(this.jointGroup.children);
    if (hits.length === 0) return null;
    return hits[0].object.userData.joint as number;
  }

  /** Project the pointer onto the camera-facing plane through the joint. */
  dragPosition(ndcX: number, ndcY: number, joint: number): [number, number, number] {
    const skel = this.state.skeleton;
    if (!skel) throw new Error("no skeleton");
    const origin = new THREE.Vector3(
      skel.joints[3 * joint],
      skel.joints[3 * joint + 1],
      skel.joints[3 * joint + 2],
    );
    const normal = new THREE.Vector3();
    this.camera.getWorldDirection(normal);
    const plane = new THREE.Plane().setFromNormalAndCoplanarPoint(normal, origin);
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const out = new THREE.Vector3();
    this.raycaster.ray.intersectPlane(plane, out);
    return [out.x, out.y, out.z];
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
